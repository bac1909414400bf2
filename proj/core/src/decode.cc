#include "ahgc/decode.h"

#include <algorithm>
#include <numeric>
#include <string>

#include "ahgc/error.h"

namespace ahgc {
namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;  // root is always the smallest index
  }

 private:
  std::vector<std::size_t> parent_;
};

void check_p_tau(double p_tau) {
  if (!(p_tau >= 0.0 && p_tau <= 1.0)) throw ValidationError("p_tau", "must lie in [0, 1]");
}

}  // namespace

std::vector<std::vector<std::size_t>> SubgraphPartition::members() const {
  std::vector<std::vector<std::size_t>> out(num_subgraphs);
  for (std::size_t i = 0; i < assignment.size(); ++i) out[assignment[i]].push_back(i);
  return out;
}

std::vector<std::size_t> candidate_set(std::size_t node, const AffinityGraph& graph, const LinkageDensity& ld,
                                       double p_tau) {
  check_p_tau(p_tau);
  std::vector<std::size_t> z;
  const auto& list = graph.neighbors[node];
  for (std::size_t s = 0; s < list.size(); ++s) {
    const std::size_t j = list[s].index;
    if (ld.linkage(node, s) >= p_tau && ld.d[node] <= ld.d[j]) z.push_back(j);
  }
  return z;
}

SubgraphPartition partition_from_edges(std::size_t n, std::vector<DirectedEdge> edges,
                                       std::span<const double> density) {
  if (density.size() != n) throw ValidationError("density", "one value per node required");
  DisjointSets sets(n);
  for (const auto& e : edges) {
    if (e.src >= n || e.dst >= n) throw ValidationError("edges", "node index out of range");
    sets.unite(e.src, e.dst);
  }
  SubgraphPartition part;
  part.selected_edges = std::move(edges);
  part.assignment.assign(n, 0);
  std::vector<std::size_t> id_of_root(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = sets.find(i);
    if (id_of_root[root] == n) {
      id_of_root[root] = part.num_subgraphs++;
      part.peaks.push_back(i);
    }
    const std::size_t c = id_of_root[root];
    part.assignment[i] = c;
    // Strict comparison keeps the lowest index on density ties.
    if (density[i] > density[part.peaks[c]]) part.peaks[c] = i;
  }
  return part;
}

SubgraphPartition decode_graph(const AffinityGraph& graph, const LinkageDensity& ld, double p_tau) {
  check_p_tau(p_tau);
  if (ld.n != graph.n || ld.k != graph.k || ld.d.size() != graph.n) {
    throw ValidationError("linkage", "shape does not match the graph");
  }
  std::vector<DirectedEdge> edges;
  for (std::size_t i = 0; i < graph.n; ++i) {
    const auto& list = graph.neighbors[i];
    bool found = false;
    std::size_t best = 0;
    double best_e = 0.0;
    for (std::size_t s = 0; s < list.size(); ++s) {
      const std::size_t j = list[s].index;
      if (!(ld.linkage(i, s) >= p_tau && ld.d[i] <= ld.d[j])) continue;
      const double e = ld.coefficient(i, s);
      if (!found || e > best_e || (e == best_e && j < best)) {
        found = true;
        best = j;
        best_e = e;
      }
    }
    if (found) edges.push_back({i, best});
  }
  return partition_from_edges(graph.n, std::move(edges), ld.d);
}

}  // namespace ahgc
