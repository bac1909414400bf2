#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace ahgc {

// One node feature per row.
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Split { kLabeled, kUnlabeled };
enum class Origin { kId, kOod };

struct EmbeddingRecord {
  std::int64_t id = 0;
  std::vector<double> feature;
  Split split = Split::kUnlabeled;
  // Present iff the record is Labeled (ground truth or an assigned pseudo-label).
  std::optional<int> label;
  // Epoch in which a pseudo-label was assigned; empty for ground-truth labels.
  std::optional<int> pseudo_epoch;
  // Evaluation-only ground truth. Training code never reads these two fields.
  std::optional<Origin> origin;
  std::optional<int> true_label;

  bool operator==(const EmbeddingRecord&) const = default;
};

struct Dataset {
  int num_classes = 0;  // R: ID classes, labels live in [0, R)
  std::vector<EmbeddingRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  std::size_t dim() const noexcept { return records.empty() ? 0 : records.front().feature.size(); }

  bool operator==(const Dataset&) const = default;
};

// Throws ValidationError if record invariants are broken: consistent d >= 1,
// unique ids, Labeled <=> label present, labels within [0, num_classes).
void validate(const Dataset& dataset);

FeatureMatrix feature_matrix(const Dataset& dataset);

// Per-record training label (Labeled split only).
std::vector<std::optional<int>> training_labels(const Dataset& dataset);

struct SyntheticSpec {
  int coarse_id_classes = 2;
  int fine_per_class = 2;
  int ood_clusters = 1;
  int points_per_cluster = 60;
  int dim = 16;
  double cluster_sep = 8.0;     // in units of the within-cluster standard deviation
  double labeled_fraction = 0.7;
  std::uint64_t seed = 0;
};

// The benchmark used by the acceptance suite and `--gen-synth default`.
SyntheticSpec default_benchmark(std::uint64_t seed = 0);

void validate(const SyntheticSpec& spec);

// Isotropic unit-variance Gaussian clusters. Fine subclusters of a coarse class
// share its label; OOD clusters are unlabeled. Pure function of its argument.
Dataset gen_synthetic(const SyntheticSpec& spec);

std::vector<double> normalized(std::span<const double> v);

// Scales every feature to unit L2 norm. Zero vectors raise ValidationError
// naming the record id.
Dataset normalize_features(Dataset dataset);

}  // namespace ahgc
