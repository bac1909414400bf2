#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ahgc/dataset.h"

namespace ahgc {

struct Neighbor {
  std::size_t index = 0;
  double affinity = 0.0;  // cosine similarity a_ij

  bool operator==(const Neighbor&) const = default;
};

// Directed k-NN affinity graph. neighbors[i] holds exactly k entries sorted by
// descending affinity, ties broken by ascending neighbor index; never i itself.
struct AffinityGraph {
  std::size_t n = 0;
  std::size_t k = 0;
  int level = 0;
  std::vector<std::vector<Neighbor>> neighbors;

  std::size_t num_edges() const noexcept { return n * k; }
};

double cosine_similarity(std::span<const double> u, std::span<const double> v);

// Exact brute-force search. Requires n >= 2 and 1 <= k <= n - 1; k >= n is an
// error rather than being clamped.
AffinityGraph build_knn_graph(const FeatureMatrix& features, std::size_t k, int level = 0);

}  // namespace ahgc
