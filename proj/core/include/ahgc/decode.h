#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ahgc/knn_graph.h"
#include "ahgc/scorer.h"

namespace ahgc {

struct DirectedEdge {
  std::size_t src = 0;
  std::size_t dst = 0;

  bool operator==(const DirectedEdge&) const = default;
};

// Result of cutting one graph level. Subgraph ids are ordered by each
// component's lowest node index.
struct SubgraphPartition {
  std::vector<std::size_t> assignment;       // node -> subgraph
  std::vector<DirectedEdge> selected_edges;  // E', at most one per source, sorted by source
  std::vector<std::size_t> peaks;            // subgraph -> node with maximal density
  std::size_t num_subgraphs = 0;

  // Member lists per subgraph, ascending node order.
  std::vector<std::vector<std::size_t>> members() const;
};

// Z(i) = { j in list(i) : p_ij >= p_tau and d_i <= d_j }, in neighbor-list order.
std::vector<std::size_t> candidate_set(std::size_t node, const AffinityGraph& graph,
                                       const LinkageDensity& ld, double p_tau);

// One ascending pass over nodes; each non-empty Z(i) contributes its
// argmax-e_ij edge (ties to the lowest j). Components are taken on the
// undirected view of E'.
SubgraphPartition decode_graph(const AffinityGraph& graph, const LinkageDensity& ld, double p_tau);

// Components of an edge set plus per-component density peaks
// (ties to the lowest node index).
SubgraphPartition partition_from_edges(std::size_t n, std::vector<DirectedEdge> edges,
                                       std::span<const double> density);

}  // namespace ahgc
