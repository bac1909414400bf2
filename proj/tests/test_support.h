#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <vector>

#include "ahgc/dataset.h"
#include "ahgc/knn_graph.h"
#include "ahgc/rng.h"
#include "ahgc/scorer.h"

namespace ahgc::testing {

inline std::size_t uniform_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Gaussian rows; a zero row is resampled so cosine similarity stays defined.
inline FeatureMatrix random_features(Rng& rng, std::size_t n, std::size_t d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  FeatureMatrix f(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    do {
      for (Eigen::Index c = 0; c < f.cols(); ++c) f(i, c) = normal(rng);
    } while (f.row(i).norm() == 0.0);
  }
  return f;
}

// Features on a coarse lattice, so repeated rows and tied affinities are common.
inline FeatureMatrix lattice_features(Rng& rng, std::size_t n, std::size_t d) {
  std::uniform_int_distribution<int> coord(-1, 1);
  FeatureMatrix f(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    do {
      for (Eigen::Index c = 0; c < f.cols(); ++c) f(i, c) = coord(rng);
    } while (f.row(i).norm() == 0.0);
  }
  return f;
}

struct GraphCase {
  FeatureMatrix features;
  AffinityGraph graph;
};

inline GraphCase random_graph(Rng& rng, std::size_t max_n, std::size_t max_k, std::size_t d) {
  const std::size_t n = uniform_size(rng, 2, max_n);
  const std::size_t k = uniform_size(rng, 1, std::min(max_k, n - 1));
  GraphCase c;
  c.features = uniform_size(rng, 0, 3) == 0 ? lattice_features(rng, n, d) : random_features(rng, n, d);
  c.graph = build_knn_graph(c.features, k);
  return c;
}

// Linkage drawn from a small value set part of the time, so the p_tau and
// density comparisons hit exact ties.
inline LinkageDensity random_linkage(Rng& rng, const AffinityGraph& graph) {
  static constexpr double kGrid[] = {0.0, 0.1, 0.3, 0.5, 0.7, 1.0};
  const bool coarse = uniform_size(rng, 0, 1) == 0;
  LinkageDensity ld;
  ld.n = graph.n;
  ld.k = graph.k;
  ld.p.resize(graph.n * graph.k);
  ld.e.resize(ld.p.size());
  ld.d.resize(graph.n);
  for (std::size_t i = 0; i < ld.p.size(); ++i) {
    ld.p[i] = coarse ? kGrid[uniform_size(rng, 0, 5)] : uniform_real(rng, 0.0, 1.0);
    ld.e[i] = 2.0 * ld.p[i] - 1.0;
  }
  for (std::size_t i = 0; i < graph.n; ++i) {
    ld.d[i] = coarse ? kGrid[uniform_size(rng, 0, 5)] - 0.5 : uniform_real(rng, -1.0, 1.0);
  }
  return ld;
}

inline std::vector<std::optional<int>> random_labels(Rng& rng, std::size_t n, int classes, double labeled_prob) {
  std::vector<std::optional<int>> labels(n);
  std::bernoulli_distribution labeled(labeled_prob);
  std::uniform_int_distribution<int> cls(0, classes - 1);
  for (auto& l : labels) {
    if (labeled(rng)) l = cls(rng);
  }
  return labels;
}

// |a - n| <= tol * max(1, |a|, |n|)
inline bool close_relative(double analytic, double numeric, double tol) {
  return std::abs(analytic - numeric) <= tol * std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

}  // namespace ahgc::testing
