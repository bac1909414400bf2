#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "ahgc/dataset.h"
#include "ahgc/metrics.h"
#include "ahgc/training.h"

namespace ahgc {

struct PipelineConfig {
  // Hierarchy and labeling.
  std::size_t k = 10;
  std::size_t k_target = 0;
  double p_tau = 0.3;
  double rho = 0.5;
  std::size_t max_levels = 10;

  // Scoring.
  double temperature = 1.0;
  double delta = 0.7;
  bool delta_from_tpr = false;  // derive delta at 95% TPR on labeled scores instead

  // Objective and optimizer.
  LossWeights weights;
  std::size_t max_epochs = 50;
  double lr = 0.05;
  std::size_t hidden_dim = 64;  // scorer width
  std::size_t classifier_hidden = 32;
  double scorer_lr = 0.1;
  std::size_t scorer_steps = 50;
  double virtual_ratio = 16.0;
  std::size_t pretrain_steps = 100;
  std::size_t steps_per_epoch = 10;
  double noise_sigma = 0.1;
  double drop_prob = 0.1;
  InfoNceForm infonce_form = InfoNceForm::kPrinted;
  double tol = 1e-5;
  std::size_t patience = 5;
  std::uint64_t seed = 0;

  // Inputs: either a synthetic spec or a dataset file with optional sidecars.
  std::optional<SyntheticSpec> synthetic;
  std::filesystem::path data;
  std::filesystem::path origin;
  std::filesystem::path truth;
  std::filesystem::path out_dir = "ahgc-out";
};

void validate(const PipelineConfig& config);

TrainingConfig training_config(const PipelineConfig& config);

// Generated or loaded dataset, with evaluation sidecars attached when given.
// Features are not yet normalized.
Dataset prepare_dataset(const PipelineConfig& config);

// Scores the records that were Unlabeled in `dataset` (the evaluation set).
// When delta_from_tpr is set, delta is the 95%-TPR threshold over the scores
// of the Labeled records. Evaluation fields are copied from the records.
std::vector<ScoredSample> score_dataset(const ClassifierParams& classifier, const Dataset& dataset,
                                        double temperature, double delta, bool delta_from_tpr);

// epochs.jsonl, pseudo_labels.csv, hierarchy.json, partition.csv and checkpoints.
void write_training_artifacts(const std::filesystem::path& out_dir, const Dataset& dataset,
                              const TrainingResult& result);

struct PipelineResult {
  Dataset dataset;  // normalized input with evaluation sidecars
  TrainingResult training;
  std::vector<ScoredSample> scores;
  std::optional<MetricsReport> metrics;  // needs origins
};

// load/generate -> normalize -> train -> score -> evaluate, writing every
// artifact under config.out_dir.
PipelineResult run_pipeline(const PipelineConfig& config);

}  // namespace ahgc
