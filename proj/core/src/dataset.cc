#include "ahgc/dataset.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <unordered_set>

#include "ahgc/error.h"
#include "ahgc/rng.h"

namespace ahgc {

void validate(const Dataset& dataset) {
  if (dataset.num_classes < 0) {
    throw ValidationError("num_classes", "must be non-negative");
  }
  const std::size_t d = dataset.dim();
  std::unordered_set<std::int64_t> ids;
  for (const auto& r : dataset.records) {
    const std::string where = "record " + std::to_string(r.id);
    if (r.id < 0) throw ValidationError("id", where + ": ids must be non-negative");
    if (!ids.insert(r.id).second) throw ValidationError("id", where + ": duplicate id");
    if (r.feature.empty() || r.feature.size() != d) {
      throw ValidationError("feature", where + ": feature dimension mismatch");
    }
    if (r.split == Split::kLabeled && !r.label) {
      throw ValidationError("label", where + ": Labeled record without label");
    }
    if (r.split == Split::kUnlabeled && r.label) {
      throw ValidationError("label", where + ": Unlabeled record carries a label");
    }
    if (r.label && (*r.label < 0 || *r.label >= dataset.num_classes)) {
      throw ValidationError("label", where + ": label out of range");
    }
  }
}

FeatureMatrix feature_matrix(const Dataset& dataset) {
  FeatureMatrix m(dataset.size(), dataset.dim());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& f = dataset.records[i].feature;
    for (std::size_t c = 0; c < f.size(); ++c) m(i, c) = f[c];
  }
  return m;
}

std::vector<std::optional<int>> training_labels(const Dataset& dataset) {
  std::vector<std::optional<int>> labels(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& r = dataset.records[i];
    if (r.split == Split::kLabeled) labels[i] = r.label;
  }
  return labels;
}

SyntheticSpec default_benchmark(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.seed = seed;
  return spec;
}

void validate(const SyntheticSpec& s) {
  if (s.coarse_id_classes < 1) throw ValidationError("coarse_id_classes", "must be >= 1");
  if (s.fine_per_class < 1) throw ValidationError("fine_per_class", "must be >= 1");
  if (s.ood_clusters < 1) throw ValidationError("ood_clusters", "must be >= 1");
  if (s.points_per_cluster < 1) throw ValidationError("points_per_cluster", "must be >= 1");
  if (s.dim < 1) throw ValidationError("dim", "must be >= 1");
  if (!(s.cluster_sep > 0.0) || !std::isfinite(s.cluster_sep)) {
    throw ValidationError("cluster_sep", "must be a positive finite number");
  }
  if (!(s.labeled_fraction > 0.0 && s.labeled_fraction < 1.0)) {
    throw ValidationError("labeled_fraction", "must lie strictly between 0 and 1");
  }
}

namespace {

struct Cluster {
  std::vector<double> center;
  std::optional<int> coarse;  // empty for OOD
};

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::vector<double> gaussian_vector(Rng& rng, int dim, double scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (auto& x : v) x = scale * normal(rng);
  return v;
}

}  // namespace

Dataset gen_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  Rng rng(substream_seed(spec.seed, "data"));
  std::normal_distribution<double> normal(0.0, 1.0);

  // Fine centers sit at half the spread of their coarse parent so sibling
  // subclusters are closer to each other than to other coarse classes.
  std::vector<Cluster> clusters;
  for (int c = 0; c < spec.coarse_id_classes; ++c) {
    const auto parent = gaussian_vector(rng, spec.dim, 1.0);
    for (int f = 0; f < spec.fine_per_class; ++f) {
      auto offset = gaussian_vector(rng, spec.dim, 0.5);
      for (std::size_t i = 0; i < offset.size(); ++i) offset[i] += parent[i];
      clusters.push_back({std::move(offset), c});
    }
  }
  for (int o = 0; o < spec.ood_clusters; ++o) {
    clusters.push_back({gaussian_vector(rng, spec.dim, 1.0), std::nullopt});
  }

  // Rescale so the closest pair of centers is exactly cluster_sep apart.
  double min_dist = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < clusters.size(); ++a) {
    for (std::size_t b = a + 1; b < clusters.size(); ++b) {
      min_dist = std::min(min_dist, distance(clusters[a].center, clusters[b].center));
    }
  }
  if (clusters.size() > 1) {
    if (!(min_dist > 0.0)) throw NumericalError("gen_synthetic: coincident cluster centers");
    const double scale = spec.cluster_sep / min_dist;
    for (auto& cl : clusters) {
      for (auto& x : cl.center) x *= scale;
    }
  }

  const std::size_t per = static_cast<std::size_t>(spec.points_per_cluster);
  const std::size_t id_clusters =
      static_cast<std::size_t>(spec.coarse_id_classes) * static_cast<std::size_t>(spec.fine_per_class);
  const std::size_t n_id = id_clusters * per;
  const auto total_labeled =
      static_cast<std::size_t>(std::llround(spec.labeled_fraction * static_cast<double>(n_id)));

  std::vector<EmbeddingRecord> records;
  records.reserve(clusters.size() * per);
  for (std::size_t ci = 0; ci < clusters.size(); ++ci) {
    const auto& cl = clusters[ci];
    // Spread the labeled quota evenly: every ID cluster gets floor or ceil.
    std::size_t quota = 0;
    if (cl.coarse) {
      quota = total_labeled / id_clusters + (ci < total_labeled % id_clusters ? 1 : 0);
    }
    std::vector<std::size_t> order(per);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> labeled(per, false);
    for (std::size_t q = 0; q < quota; ++q) labeled[order[q]] = true;

    for (std::size_t p = 0; p < per; ++p) {
      EmbeddingRecord r;
      r.feature.resize(static_cast<std::size_t>(spec.dim));
      for (std::size_t i = 0; i < r.feature.size(); ++i) r.feature[i] = cl.center[i] + normal(rng);
      r.origin = cl.coarse ? Origin::kId : Origin::kOod;
      r.true_label = cl.coarse;
      if (labeled[p]) {
        r.split = Split::kLabeled;
        r.label = cl.coarse;
      }
      records.push_back(std::move(r));
    }
  }

  std::shuffle(records.begin(), records.end(), rng);
  for (std::size_t i = 0; i < records.size(); ++i) records[i].id = static_cast<std::int64_t>(i);

  Dataset ds;
  ds.num_classes = spec.coarse_id_classes;
  ds.records = std::move(records);
  return ds;
}

std::vector<double> normalized(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw ValidationError("feature", "vector has zero or non-finite norm");
  }
  std::vector<double> out(v.begin(), v.end());
  for (auto& x : out) x /= norm;
  return out;
}

Dataset normalize_features(Dataset dataset) {
  for (auto& r : dataset.records) {
    try {
      r.feature = normalized(r.feature);
    } catch (const ValidationError&) {
      throw ValidationError("feature", "record " + std::to_string(r.id) + " has a zero feature vector");
    }
  }
  return dataset;
}

}  // namespace ahgc
