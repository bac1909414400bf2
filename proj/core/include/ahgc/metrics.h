#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ahgc/dataset.h"

namespace ahgc {

// g = T log sum_c exp(l_c / T), evaluated with a max shift.
double energy_score(std::span<const double> logits, double temperature);

enum class Decision { kId, kOod };

// OOD iff score <= delta.
Decision detect(double score, double delta);

// Largest delta whose strictly-above fraction of id_scores is >= tpr: one ulp
// below the ceil(tpr * n)-th largest score.
double threshold_at_tpr(std::span<const double> id_scores, double tpr);

// Fraction of OOD scores strictly above threshold_at_tpr(id_scores, tpr).
double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores, double tpr = 0.95);

// Mann-Whitney: P(id > ood) with ties counted as one half.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

enum class Positive { kIn, kOut };

// Step-integrated area under the precision-recall curve. Thresholds sweep the
// distinct scores in descending order; each tie group is one step. For kOut
// the OOD side is positive and scores are negated.
double aupr(std::span<const double> id_scores, std::span<const double> ood_scores, Positive positive);

struct ScoredSample {
  std::int64_t id = 0;
  std::vector<double> logits;
  double score = 0.0;
  int predicted_class = 0;
  Decision decision = Decision::kId;
  std::optional<Origin> origin;
  std::optional<int> true_label;
};

// Uses the lowest threshold whose OOD false-positive rate is <= m, then counts
// ID samples scored above it and classified correctly, over all ID samples.
// Every ID sample needs a true label.
double ccr_at_fpr(std::span<const ScoredSample> samples, double m);

// ccr_at keys, as written in the metrics JSON.
inline const std::vector<std::pair<std::string, double>>& ccr_levels() {
  static const std::vector<std::pair<std::string, double>> levels = {
      {"1e-4", 1e-4}, {"1e-3", 1e-3}, {"1e-2", 1e-2}, {"1e-1", 1e-1}};
  return levels;
}

struct MetricsReport {
  double fpr95 = 0.0;
  double auroc = 0.0;
  double aupr_in = 0.0;
  double aupr_out = 0.0;
  // Present when every ID sample carries a true label.
  std::optional<std::map<std::string, double>> ccr_at;
  std::optional<double> id_accuracy;

  nlohmann::json to_json() const;
};

// Samples must all carry an origin, with both ID and OOD present.
MetricsReport compute_metrics(std::span<const ScoredSample> samples);

// Rows of `logits` align with `ids`.
std::vector<ScoredSample> score_samples(std::span<const std::int64_t> ids, const FeatureMatrix& logits,
                                        double temperature, double delta);

}  // namespace ahgc
