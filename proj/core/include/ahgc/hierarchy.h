#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "ahgc/dataset.h"
#include "ahgc/decode.h"
#include "ahgc/knn_graph.h"
#include "ahgc/scorer.h"

namespace ahgc {

struct HierarchyConfig {
  std::size_t k = 10;
  double p_tau = 0.3;
  std::size_t max_levels = 10;
  // Stop before any level whose cut would leave fewer than k_target subgraphs.
  // 0 disables the refinement.
  std::size_t k_target = 0;
};

void validate(const HierarchyConfig& config);

// Produces linkage/density for one level. `labels` are lifted to the level's
// nodes (unanimous labeled members, else empty).
using LinkageFn = std::function<LinkageDensity(const AffinityGraph& graph, const FeatureMatrix& input,
                                               std::span<const std::optional<int>> labels,
                                               std::size_t level)>;

struct HierarchyLevel {
  std::size_t level = 0;
  AffinityGraph graph;         // empty (k = 0) when the level has < 2 nodes
  FeatureMatrix identity;      // tilde f: peak feature, d columns
  FeatureMatrix average;       // bar f: member mean of identity features, d columns
  FeatureMatrix input;         // level 0: raw f; otherwise [identity, average]
  std::vector<std::optional<int>> labels;
  LinkageDensity linkage;
  SubgraphPartition partition;
  std::vector<std::vector<std::size_t>> members;  // level node -> level-0 nodes
};

struct HierarchyResult {
  std::vector<HierarchyLevel> levels;
  std::vector<std::size_t> final_assignment;  // level-0 node -> final subgraph
  std::vector<std::size_t> final_peaks;       // final subgraph -> level-0 representative
  std::size_t num_subgraphs = 0;
  bool converged = false;          // ended because E' was empty
  bool stopped_at_target = false;  // ended by the k_target refinement
  bool hit_max_levels = false;     // warning: cap reached with edges still selected

  std::size_t depth() const noexcept { return levels.size(); }  // Q
  // Per-level node / edge / subgraph counts.
  nlohmann::json trace() const;
};

struct AggregatedFeatures {
  FeatureMatrix identity;
  FeatureMatrix average;
  FeatureMatrix input;  // [identity, average]
  std::vector<std::vector<std::size_t>> members;
};

// One next-level node per subgraph of `level.partition`: identity = the peak's
// identity feature, average = mean of member identity features.
AggregatedFeatures aggregate(const HierarchyLevel& level);

// Class y iff every labeled level-0 member carries y; empty if mixed or none.
std::optional<int> lifted_label(std::span<const std::size_t> members,
                                std::span<const std::optional<int>> base_labels);

HierarchyResult run_hierarchy(const FeatureMatrix& features, std::span<const std::optional<int>> labels,
                              const HierarchyConfig& config, const LinkageFn& linkage);

// Owns one scorer per input dimension (d at level 0, 2d above) and trains each
// at most once per round, at the first level of its dimension that has a
// labeled edge. Every round restarts from the initial parameters (or the ones
// installed with set_base / set_aggregated), so a round is a pure function of
// its labels.
class ScorerBank {
 public:
  struct Options {
    std::size_t hidden_dim = 64;
    double lr = 0.1;
    std::size_t steps = 50;
    std::uint64_t seed = 0;
    // Virtual outliers added when training the aggregated scorer, per labeled
    // node. Each is a labeled row with its coordinates shuffled and carries a
    // class of its own. With only a handful of labeled nodes above level 0,
    // they teach the scorer that directions unrelated to every known class
    // are "different" rather than a coin flip.
    double virtual_ratio = 16.0;
  };

  ScorerBank(std::size_t base_dim, Options options);

  // Restores the starting parameters and marks both scorers as untrained.
  void begin_round();
  LinkageFn linkage_fn();

  const ScorerParams& base() const noexcept { return base_; }
  const ScorerParams& aggregated() const noexcept { return aggregated_; }
  void set_base(ScorerParams params);
  void set_aggregated(ScorerParams params);
  // Loss traces from the most recent round (empty if the scorer was not trained).
  const std::vector<double>& base_trace() const noexcept { return base_trace_; }
  const std::vector<double>& aggregated_trace() const noexcept { return aggregated_trace_; }

 private:
  LinkageDensity estimate(const AffinityGraph& graph, const FeatureMatrix& input,
                          std::span<const std::optional<int>> labels);

  Options options_;
  ScorerParams base_;
  ScorerParams aggregated_;
  ScorerParams base_start_;
  ScorerParams aggregated_start_;
  bool base_trained_ = false;
  bool aggregated_trained_ = false;
  std::vector<double> base_trace_;
  std::vector<double> aggregated_trace_;
};

}  // namespace ahgc
