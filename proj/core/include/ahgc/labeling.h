#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ahgc/dataset.h"

namespace ahgc {

struct SubgraphLabelStat {
  std::size_t subgraph = 0;
  std::size_t size = 0;
  std::optional<int> best_class;  // empty when no member is labeled
  double ratio = 0.0;             // r_{k,y*}
  bool assigned = false;
};

struct PseudoLabel {
  std::int64_t id = 0;
  int label = 0;
  int epoch = 0;

  bool operator==(const PseudoLabel&) const = default;
};

struct LabelAssignmentReport {
  int epoch = 0;
  std::vector<SubgraphLabelStat> subgraphs;
  std::vector<PseudoLabel> newly_labeled;
};

// r_{k,y} for every class present among the labeled members; the denominator
// is the full subgraph size (unlabeled members included).
std::map<int, double> labeled_percentage(std::span<const std::size_t> members,
                                         std::span<const std::optional<int>> labels);

// assignment[i] is the subgraph of dataset.records[i]. Subgraphs whose unique
// best ratio exceeds rho hand that class to every unlabeled member, moving it
// to the Labeled split. Ties for the best class assign nothing.
std::pair<Dataset, LabelAssignmentReport> assign_labels(std::span<const std::size_t> assignment,
                                                        const Dataset& dataset, double rho, int epoch);

}  // namespace ahgc
