#include "ahgc/knn_graph.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ahgc/error.h"

namespace ahgc {
namespace {

double dot(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) s += a[i] * b[i];
  return s;
}

double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }

}  // namespace

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ValidationError("vector", "dimension mismatch");
  const double nu = std::sqrt(dot(u.data(), u.data(), u.size()));
  const double nv = std::sqrt(dot(v.data(), v.data(), v.size()));
  if (!(nu > 0.0) || !(nv > 0.0)) throw ValidationError("vector", "zero vector has no direction");
  return clamp_unit(dot(u.data(), v.data(), u.size()) / (nu * nv));
}

AffinityGraph build_knn_graph(const FeatureMatrix& features, std::size_t k, int level) {
  const auto n = static_cast<std::size_t>(features.rows());
  const auto d = static_cast<std::size_t>(features.cols());
  if (n < 2) throw ValidationError("features", "need at least 2 nodes, got " + std::to_string(n));
  if (d < 1) throw ValidationError("features", "dimension must be >= 1");
  if (k < 1 || k >= n) {
    throw ValidationError("k", "must satisfy 1 <= k <= n-1 (k=" + std::to_string(k) +
                                   ", n=" + std::to_string(n) + ")");
  }

  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = features.data() + i * d;
    norms[i] = std::sqrt(dot(row, row, d));
    if (!(norms[i] > 0.0) || !std::isfinite(norms[i])) {
      throw ValidationError("features", "node " + std::to_string(i) + " has a zero or non-finite vector");
    }
  }

  AffinityGraph g;
  g.n = n;
  g.k = k;
  g.level = level;
  g.neighbors.resize(n);
  // a_ij and a_ji evaluate the same products in the same order, so affinities
  // are bitwise symmetric without storing the full matrix.
  std::vector<double> row(n);
  std::vector<std::size_t> cand(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ri = features.data() + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = j == i ? 1.0 : clamp_unit(dot(ri, features.data() + j * d, d) / (norms[i] * norms[j]));
    }
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) cand[c++] = j;
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(),
                      [&row](std::size_t a, std::size_t b) {
                        return row[a] > row[b] || (row[a] == row[b] && a < b);
                      });
    auto& list = g.neighbors[i];
    list.reserve(k);
    for (std::size_t s = 0; s < k; ++s) list.push_back({cand[s], row[cand[s]]});
  }
  return g;
}

}  // namespace ahgc
