#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "ahgc/dataset.h"
#include "ahgc/hierarchy.h"
#include "ahgc/labeling.h"
#include "ahgc/objectives.h"
#include "ahgc/scorer.h"

namespace ahgc {

struct TrainingConfig {
  HierarchyConfig hierarchy;
  ScorerBank::Options scorer;
  LossWeights weights;
  double rho = 0.5;
  std::size_t max_epochs = 50;
  double lr = 0.05;
  std::size_t classifier_hidden = 32;
  std::size_t pretrain_steps = 100;   // L0^L-only steps before the first epoch
  std::size_t steps_per_epoch = 10;   // full-batch steps on the combined objective
  double noise_sigma = 0.1;
  double drop_prob = 0.1;
  InfoNceForm infonce_form = InfoNceForm::kPrinted;
  double tol = 1e-5;  // relative change in total loss
  std::size_t patience = 5;
  std::uint64_t seed = 0;
};

void validate(const TrainingConfig& config);

struct EpochReport {
  int epoch = 0;
  LossBreakdown losses;  // at the start of the epoch's gradient steps
  std::size_t newly_labeled = 0;
  std::size_t labeled_total = 0;
  std::size_t subgraphs = 0;
  nlohmann::json hierarchy_trace;

  // {epoch, L0, L1, L2, L0L, total, newly_labeled, subgraphs}
  nlohmann::json to_json() const;
};

struct TrainingResult {
  ClassifierParams classifier;
  ScorerParams base_scorer;
  ScorerParams aggregated_scorer;
  Dataset dataset;  // with pseudo-labels applied
  std::vector<EpochReport> epochs;
  std::vector<PseudoLabel> pseudo_labels;
  HierarchyResult last_hierarchy;
  bool converged = false;
};

// Per epoch: train scorers and cut the hierarchy on the current labels,
// assign pseudo-labels, then take gradient steps on the combined objective.
// Requires at least one labeled record per class.
TrainingResult run_training(const Dataset& dataset, const TrainingConfig& config);

}  // namespace ahgc
