#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ahgc/dataset.h"
#include "ahgc/decode.h"
#include "ahgc/knn_graph.h"
#include "ahgc/labeling.h"
#include "ahgc/metrics.h"
#include "ahgc/scorer.h"

namespace ahgc {

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

// Embedding CSV: header `id,split,label,f0,...,f{d-1}`, split in {L,U},
// label a class index or `-`. Labeled rows need a label and Unlabeled rows
// must not have one. num_classes defaults to (largest label + 1).
void write_dataset(std::ostream& out, const Dataset& dataset);
Dataset read_dataset(std::istream& in, const std::string& source = "dataset",
                     std::optional<int> num_classes = std::nullopt);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path, std::optional<int> num_classes = std::nullopt);

// Origin sidecar `id,origin` with origin in {ID,OOD}.
void save_origins(const std::filesystem::path& path, const Dataset& dataset);
std::map<std::int64_t, Origin> load_origins(const std::filesystem::path& path);

// Truth sidecar `id,true_label`; `-` for OOD records.
void save_truth(const std::filesystem::path& path, const Dataset& dataset);
std::map<std::int64_t, std::optional<int>> load_truth(const std::filesystem::path& path);

// Fills evaluation fields from sidecars. Every record must be covered.
void attach_origins(Dataset& dataset, const std::map<std::int64_t, Origin>& origins);
void attach_truth(Dataset& dataset, const std::map<std::int64_t, std::optional<int>>& truth);

// `id,pseudo_label,epoch_assigned`
void save_pseudo_labels(const std::filesystem::path& path, std::span<const PseudoLabel> labels);
std::vector<PseudoLabel> load_pseudo_labels(const std::filesystem::path& path);
// Moves the named Unlabeled records into the Labeled split.
Dataset apply_pseudo_labels(Dataset dataset, std::span<const PseudoLabel> labels);

// Graph CSV `src,dst,affinity[,linkage]` keyed by record id. Rows are grouped
// by source in node order, each source's neighbors in list order.
struct GraphFile {
  AffinityGraph graph;
  std::vector<std::int64_t> ids;        // node index -> record id
  std::optional<std::vector<double>> p;  // node-major linkage probabilities
};
void save_graph(const std::filesystem::path& path, const AffinityGraph& graph, std::span<const std::int64_t> ids,
                const LinkageDensity* linkage = nullptr);
// Node order is the order in which sources first appear; every source must
// list the same number of neighbors and every destination must be a source.
GraphFile load_graph(const std::filesystem::path& path);

// `node_id,subgraph,is_peak`
void save_partition(const std::filesystem::path& path, const SubgraphPartition& partition,
                    std::span<const std::int64_t> ids);
struct PartitionFile {
  std::vector<std::int64_t> ids;
  std::vector<std::size_t> assignment;
  std::vector<bool> is_peak;
};
PartitionFile load_partition(const std::filesystem::path& path);
void save_assignment(const std::filesystem::path& path, std::span<const std::size_t> assignment,
                     std::span<const std::size_t> peaks, std::span<const std::int64_t> ids);

// `id,score,predicted_class,decision`
void save_scores(const std::filesystem::path& path, std::span<const ScoredSample> samples);
std::vector<ScoredSample> load_scores(const std::filesystem::path& path);

// Writes text exactly (no locale, binary mode); creates parent directories.
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace ahgc
