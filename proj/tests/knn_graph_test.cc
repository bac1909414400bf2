#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "ahgc/error.h"
#include "ahgc/knn_graph.h"
#include "test_support.h"

namespace ahgc {
namespace {

using V = std::vector<double>;

TEST(CosineSimilarity, WorkedExamples) {
  EXPECT_DOUBLE_EQ(cosine_similarity(V{1, 0}, V{0, 1}), 0.0);
  EXPECT_NEAR(cosine_similarity(V{1, 2}, V{2, 4}), 1.0, 1e-15);
  EXPECT_NEAR(cosine_similarity(V{1, 0}, V{1, 1}), 0.70710678118654752, 1e-15);
}

TEST(CosineSimilarity, RejectsZeroVectorsAndMismatchedDims) {
  EXPECT_THROW(cosine_similarity(V{0, 0}, V{1, 0}), ValidationError);
  EXPECT_THROW(cosine_similarity(V{1, 0}, V{1, 0, 0}), ValidationError);
}

FeatureMatrix rows(std::initializer_list<std::initializer_list<double>> values) {
  FeatureMatrix f(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : values) {
    Eigen::Index c = 0;
    for (double x : row) f(r, c++) = x;
    ++r;
  }
  return f;
}

TEST(BuildKnnGraph, AnglesExample) {
  const double ten = 10.0 * std::numbers::pi / 180.0;
  const FeatureMatrix f = rows({{1, 0}, {std::cos(ten), std::sin(ten)}, {0, 1}});
  const AffinityGraph g = build_knn_graph(f, 1);
  ASSERT_EQ(g.n, 3u);
  EXPECT_EQ(g.neighbors[0][0].index, 1u);
  EXPECT_EQ(g.neighbors[1][0].index, 0u);
  EXPECT_EQ(g.neighbors[2][0].index, 1u);
}

TEST(BuildKnnGraph, KMustBeBelowN) {
  const FeatureMatrix f = rows({{1, 0}, {0, 1}, {1, 1}});
  EXPECT_THROW(build_knn_graph(f, 3), ValidationError);
  EXPECT_THROW(build_knn_graph(f, 0), ValidationError);
  EXPECT_THROW(build_knn_graph(rows({{1, 0}}), 1), ValidationError);
}

TEST(BuildKnnGraph, DuplicatedPointsHaveAffinityOne) {
  const AffinityGraph g = build_knn_graph(rows({{0.3, 0.4}, {0.3, 0.4}}), 1);
  EXPECT_EQ(g.neighbors[0][0], (Neighbor{1, 1.0}));
  EXPECT_EQ(g.neighbors[1][0], (Neighbor{0, 1.0}));
}

// Brute-force oracle: every candidate scored by the same cosine routine and
// sorted by (affinity desc, index asc).
std::vector<Neighbor> oracle_neighbors(const FeatureMatrix& f, std::size_t i, std::size_t k) {
  std::vector<Neighbor> all;
  const auto d = static_cast<std::size_t>(f.cols());
  for (std::size_t j = 0; j < static_cast<std::size_t>(f.rows()); ++j) {
    if (j == i) continue;
    all.push_back({j, cosine_similarity(std::span<const double>(f.row(static_cast<Eigen::Index>(i)).data(), d),
                                        std::span<const double>(f.row(static_cast<Eigen::Index>(j)).data(), d))});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.affinity != b.affinity ? a.affinity > b.affinity : a.index < b.index;
  });
  all.resize(k);
  return all;
}

TEST(BuildKnnGraph, MatchesBruteForceOracle) {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const auto c = testing::random_graph(rng, 40, 8, testing::uniform_size(rng, 1, 6));
    ASSERT_EQ(c.graph.neighbors.size(), c.graph.n);
    for (std::size_t i = 0; i < c.graph.n; ++i) {
      ASSERT_EQ(c.graph.neighbors[i], oracle_neighbors(c.features, i, c.graph.k)) << "trial " << trial << " node " << i;
    }
  }
}

TEST(BuildKnnGraph, StructuralInvariants) {
  Rng rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = testing::random_graph(rng, 40, 8, 3);
    const auto& g = c.graph;
    for (std::size_t i = 0; i < g.n; ++i) {
      ASSERT_EQ(g.neighbors[i].size(), g.k);
      for (std::size_t s = 0; s < g.k; ++s) {
        const Neighbor& nb = g.neighbors[i][s];
        EXPECT_NE(nb.index, i);
        EXPECT_LT(nb.index, g.n);
        EXPECT_GE(nb.affinity, -1.0);
        EXPECT_LE(nb.affinity, 1.0);
        if (s > 0) {
          const Neighbor& prev = g.neighbors[i][s - 1];
          EXPECT_TRUE(prev.affinity > nb.affinity || (prev.affinity == nb.affinity && prev.index < nb.index));
        }
        // Affinity is symmetric even though the neighbor relation is not.
        for (const Neighbor& back : g.neighbors[nb.index]) {
          if (back.index == i) {
            EXPECT_EQ(back.affinity, nb.affinity);
          }
        }
      }
    }
  }
}

TEST(BuildKnnGraph, DeterministicAndCarriesLevel) {
  Rng rng(23);
  const FeatureMatrix f = testing::random_features(rng, 30, 5);
  const AffinityGraph a = build_knn_graph(f, 4, 2);
  const AffinityGraph b = build_knn_graph(f, 4, 2);
  EXPECT_EQ(a.neighbors, b.neighbors);
  EXPECT_EQ(a.level, 2);
  EXPECT_EQ(a.num_edges(), 120u);
}

}  // namespace
}  // namespace ahgc
