#include "ahgc/hierarchy.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "ahgc/error.h"
#include "ahgc/rng.h"

namespace ahgc {

void validate(const HierarchyConfig& config) {
  if (config.k < 1) throw ValidationError("k", "must be >= 1");
  if (!(config.p_tau >= 0.0 && config.p_tau <= 1.0)) throw ValidationError("p_tau", "must lie in [0, 1]");
  if (config.max_levels < 1) throw ValidationError("max_levels", "must be >= 1");
}

nlohmann::json HierarchyResult::trace() const {
  nlohmann::json levels_json = nlohmann::json::array();
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const auto& lv = levels[l];
    const bool last = l + 1 == levels.size();
    std::size_t labeled = 0;
    for (const auto& y : lv.labels) labeled += y ? 1 : 0;
    levels_json.push_back({
        {"level", lv.level},
        {"nodes", static_cast<std::size_t>(lv.input.rows())},
        {"k", lv.graph.k},
        {"labeled_nodes", labeled},
        {"selected_edges", lv.partition.selected_edges.size()},
        {"subgraphs", lv.partition.num_subgraphs},
        {"cut_applied", !(last && stopped_at_target)},
    });
  }
  return {
      {"levels", levels_json},
      {"depth", levels.size()},
      {"converged", converged},
      {"stopped_at_target", stopped_at_target},
      {"hit_max_levels", hit_max_levels},
      {"final_subgraphs", num_subgraphs},
  };
}

std::optional<int> lifted_label(std::span<const std::size_t> members,
                                std::span<const std::optional<int>> base_labels) {
  std::optional<int> label;
  for (std::size_t v : members) {
    const auto& y = base_labels[v];
    if (!y) continue;
    if (label && *label != *y) return std::nullopt;
    label = y;
  }
  return label;
}

AggregatedFeatures aggregate(const HierarchyLevel& level) {
  const SubgraphPartition& part = level.partition;
  if (part.assignment.size() != static_cast<std::size_t>(level.identity.rows())) {
    throw ValidationError("level", "partition does not cover the level's nodes");
  }
  const auto groups = part.members();
  const Eigen::Index d = level.identity.cols();
  const auto m = static_cast<Eigen::Index>(part.num_subgraphs);

  AggregatedFeatures out;
  out.identity.resize(m, d);
  out.average.resize(m, d);
  out.members.resize(part.num_subgraphs);
  for (std::size_t c = 0; c < part.num_subgraphs; ++c) {
    const auto cc = static_cast<Eigen::Index>(c);
    if (groups[c].empty()) throw std::logic_error("aggregate: empty subgraph " + std::to_string(c));
    out.identity.row(cc) = level.identity.row(static_cast<Eigen::Index>(part.peaks[c]));
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(d);
    for (std::size_t j : groups[c]) {
      sum += level.identity.row(static_cast<Eigen::Index>(j));
      const auto& base = level.members[j];
      out.members[c].insert(out.members[c].end(), base.begin(), base.end());
    }
    out.average.row(cc) = sum / static_cast<double>(groups[c].size());
    std::sort(out.members[c].begin(), out.members[c].end());
  }
  out.input.resize(m, 2 * d);
  out.input.leftCols(d) = out.identity;
  out.input.rightCols(d) = out.average;
  return out;
}

HierarchyResult run_hierarchy(const FeatureMatrix& features, std::span<const std::optional<int>> labels,
                              const HierarchyConfig& config, const LinkageFn& linkage) {
  validate(config);
  const auto n0 = static_cast<std::size_t>(features.rows());
  if (labels.size() != n0) throw ValidationError("labels", "one entry per node required");

  HierarchyResult result;
  FeatureMatrix identity = features;
  FeatureMatrix average = features;
  FeatureMatrix input = features;
  std::vector<std::vector<std::size_t>> members(n0);
  for (std::size_t i = 0; i < n0; ++i) members[i] = {i};

  // Level-0 node groups that become the final subgraphs.
  std::vector<std::vector<std::size_t>> final_groups;

  for (std::size_t l = 0;; ++l) {
    HierarchyLevel lv;
    lv.level = l;
    lv.identity = std::move(identity);
    lv.average = std::move(average);
    lv.input = std::move(input);
    lv.members = std::move(members);
    lv.labels.resize(lv.members.size());
    for (std::size_t v = 0; v < lv.members.size(); ++v) lv.labels[v] = lifted_label(lv.members[v], labels);
    const std::size_t n = lv.members.size();

    if (n < 2) {
      lv.graph.n = n;
      lv.graph.level = static_cast<int>(l);
      lv.graph.neighbors.resize(n);
      lv.linkage = linkage_from_probabilities(lv.graph, {});
      lv.partition = partition_from_edges(n, {}, lv.linkage.d);
      final_groups = lv.members;
      result.converged = true;
      result.levels.push_back(std::move(lv));
      break;
    }

    lv.graph = build_knn_graph(lv.input, std::min(config.k, n - 1), static_cast<int>(l));
    lv.linkage = linkage(lv.graph, lv.input, lv.labels, l);
    if (lv.linkage.n != n || lv.linkage.k != lv.graph.k || lv.linkage.d.size() != n) {
      throw ValidationError("linkage", "estimator returned the wrong shape at level " + std::to_string(l));
    }
    lv.partition = decode_graph(lv.graph, lv.linkage, config.p_tau);

    if (lv.partition.selected_edges.empty()) {
      final_groups = lv.members;
      result.converged = true;
      result.levels.push_back(std::move(lv));
      break;
    }
    if (config.k_target > 0 && lv.partition.num_subgraphs < config.k_target) {
      final_groups = lv.members;
      result.stopped_at_target = true;
      result.levels.push_back(std::move(lv));
      break;
    }

    AggregatedFeatures next = aggregate(lv);
    result.levels.push_back(std::move(lv));
    if (result.levels.size() == config.max_levels) {
      final_groups = std::move(next.members);
      result.hit_max_levels = true;
      break;
    }
    identity = std::move(next.identity);
    average = std::move(next.average);
    input = std::move(next.input);
    members = std::move(next.members);
  }

  result.num_subgraphs = final_groups.size();
  result.final_assignment.assign(n0, 0);
  for (std::size_t c = 0; c < final_groups.size(); ++c) {
    for (std::size_t v : final_groups[c]) result.final_assignment[v] = c;
  }
  // Final subgraph c is node c of the last level, or subgraph c of its cut
  // when the level cap was hit; either way follow peaks down to level 0.
  result.final_peaks.resize(final_groups.size());
  for (std::size_t c = 0; c < final_groups.size(); ++c) {
    std::size_t l = result.levels.size() - 1;
    std::size_t v = result.hit_max_levels ? result.levels[l].partition.peaks[c] : c;
    for (; l > 0; --l) v = result.levels[l - 1].partition.peaks[v];
    result.final_peaks[c] = v;
  }
  return result;
}

namespace {

// Each virtual row permutes the coordinates of a labeled row. Inputs made of
// stacked blocks of base_dim share one permutation across blocks, keeping the
// relation between a node's own features and its aggregate intact.
ScorerTrainResult train_with_virtual_outliers(const ScorerParams& params, const AffinityGraph& graph,
                                              const FeatureMatrix& input,
                                              std::span<const std::optional<int>> labels,
                                              const ScorerBank::Options& options, std::size_t block_dim,
                                              std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(input.rows());
  const auto cols = static_cast<std::size_t>(input.cols());
  std::vector<std::size_t> labeled;
  int next_class = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i]) {
      labeled.push_back(i);
      next_class = std::max(next_class, *labels[i] + 1);
    }
  }
  const auto count = static_cast<std::size_t>(std::ceil(options.virtual_ratio * static_cast<double>(labeled.size())));
  if (count == 0 || labeled.empty()) {
    return train_scorer(params, graph, input, labels, options.lr, options.steps);
  }
  std::mt19937_64 rng(seed);
  FeatureMatrix augmented(static_cast<Eigen::Index>(n + count), input.cols());
  augmented.topRows(static_cast<Eigen::Index>(n)) = input;
  std::vector<std::optional<int>> aug_labels(labels.begin(), labels.end());
  const std::size_t width = block_dim;
  const std::size_t blocks = cols / block_dim;
  std::vector<std::size_t> perm(width);
  for (std::size_t v = 0; v < count; ++v) {
    const std::size_t src = labeled[v % labeled.size()];
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto row = static_cast<Eigen::Index>(n + v);
    for (std::size_t b = 0; b < blocks; ++b) {
      for (std::size_t c = 0; c < width; ++c) {
        augmented(row, static_cast<Eigen::Index>(b * width + c)) =
            input(static_cast<Eigen::Index>(src), static_cast<Eigen::Index>(b * width + perm[c]));
      }
    }
    aug_labels.push_back(next_class++);
  }
  // Real nodes keep their inference-time neighborhoods; virtual nodes only
  // send edges to their nearest real nodes.
  AffinityGraph aug_graph = graph;
  aug_graph.n = n + count;
  for (std::size_t v = 0; v < count; ++v) {
    const auto row = static_cast<Eigen::Index>(n + v);
    const Eigen::VectorXd a = augmented.row(row).transpose();
    std::vector<Neighbor> cand;
    cand.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
      const Eigen::VectorXd b = augmented.row(static_cast<Eigen::Index>(j)).transpose();
      cand.push_back({j, cosine_similarity(std::span<const double>(a.data(), cols), std::span<const double>(b.data(), cols))});
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(graph.k), cand.end(),
                      [](const Neighbor& x, const Neighbor& y) {
                        return x.affinity != y.affinity ? x.affinity > y.affinity : x.index < y.index;
                      });
    cand.resize(graph.k);
    aug_graph.neighbors.push_back(std::move(cand));
  }
  // Virtual edges together weigh as much as the real labeled edges, however
  // many virtual nodes there are.
  const double real_edges = static_cast<double>(count_labeled_edges(graph, labels));
  const double virtual_edges = static_cast<double>(count * graph.k);
  std::vector<double> weights(n, 1.0);
  weights.resize(n + count, real_edges / virtual_edges);
  return train_scorer(params, aug_graph, augmented, aug_labels, options.lr, options.steps, weights);
}

}  // namespace

ScorerBank::ScorerBank(std::size_t base_dim, Options options)
    : options_(options),
      base_(init_scorer(base_dim, options.hidden_dim, substream_seed(options.seed, "scorer", 0))),
      aggregated_(init_scorer(2 * base_dim, options.hidden_dim, substream_seed(options.seed, "scorer", 1))),
      base_start_(base_),
      aggregated_start_(aggregated_) {}

void ScorerBank::begin_round() {
  base_trained_ = false;
  aggregated_trained_ = false;
  base_ = base_start_;
  aggregated_ = aggregated_start_;
  base_trace_.clear();
  aggregated_trace_.clear();
}

void ScorerBank::set_base(ScorerParams params) {
  base_start_ = params;
  base_ = std::move(params);
}

void ScorerBank::set_aggregated(ScorerParams params) {
  aggregated_start_ = params;
  aggregated_ = std::move(params);
}

LinkageFn ScorerBank::linkage_fn() {
  return [this](const AffinityGraph& graph, const FeatureMatrix& input, std::span<const std::optional<int>> labels,
                std::size_t) { return estimate(graph, input, labels); };
}

LinkageDensity ScorerBank::estimate(const AffinityGraph& graph, const FeatureMatrix& input,
                                    std::span<const std::optional<int>> labels) {
  const auto dim = static_cast<std::size_t>(input.cols());
  ScorerParams* params = nullptr;
  bool* trained = nullptr;
  std::vector<double>* trace = nullptr;
  if (dim == base_.input_dim) {
    params = &base_;
    trained = &base_trained_;
    trace = &base_trace_;
  } else if (dim == aggregated_.input_dim) {
    params = &aggregated_;
    trained = &aggregated_trained_;
    trace = &aggregated_trace_;
  } else {
    throw ValidationError("features", "no scorer for input dimension " + std::to_string(dim));
  }
  if (!*trained && options_.steps > 0 && count_labeled_edges(graph, labels) > 0) {
    auto fit = options_.virtual_ratio > 0.0 && params == &aggregated_
                   ? train_with_virtual_outliers(*params, graph, input, labels, options_,
                                                 base_.input_dim, substream_seed(options_.seed, "virtual", dim))
                   : train_scorer(*params, graph, input, labels, options_.lr, options_.steps);
    *params = std::move(fit.params);
    *trace = std::move(fit.loss_trace);
    *trained = true;
  }
  return forward(*params, graph, input);
}

}  // namespace ahgc
