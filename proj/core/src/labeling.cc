#include "ahgc/labeling.h"

#include <algorithm>

#include "ahgc/error.h"

namespace ahgc {

std::map<int, double> labeled_percentage(std::span<const std::size_t> members,
                                         std::span<const std::optional<int>> labels) {
  std::map<int, std::size_t> counts;
  for (std::size_t v : members) {
    if (labels[v]) ++counts[*labels[v]];
  }
  std::map<int, double> ratios;
  for (const auto& [y, c] : counts) ratios[y] = static_cast<double>(c) / static_cast<double>(members.size());
  return ratios;
}

std::pair<Dataset, LabelAssignmentReport> assign_labels(std::span<const std::size_t> assignment,
                                                        const Dataset& dataset, double rho, int epoch) {
  if (!(rho > 0.0 && rho < 1.0)) throw ValidationError("rho", "must lie strictly between 0 and 1");
  if (assignment.size() != dataset.size()) throw ValidationError("assignment", "one subgraph per record required");

  std::size_t num_subgraphs = 0;
  for (std::size_t c : assignment) num_subgraphs = std::max(num_subgraphs, c + 1);
  std::vector<std::vector<std::size_t>> groups(num_subgraphs);
  for (std::size_t i = 0; i < assignment.size(); ++i) groups[assignment[i]].push_back(i);

  const auto labels = training_labels(dataset);
  Dataset updated = dataset;
  LabelAssignmentReport report;
  report.epoch = epoch;
  for (std::size_t k = 0; k < num_subgraphs; ++k) {
    if (groups[k].empty()) continue;
    SubgraphLabelStat stat;
    stat.subgraph = k;
    stat.size = groups[k].size();
    bool tied = false;
    for (const auto& [y, r] : labeled_percentage(groups[k], labels)) {
      if (!stat.best_class || r > stat.ratio) {
        stat.best_class = y;
        stat.ratio = r;
        tied = false;
      } else if (r == stat.ratio) {
        tied = true;
      }
    }
    stat.assigned = stat.best_class && !tied && stat.ratio > rho;
    if (stat.assigned) {
      for (std::size_t i : groups[k]) {
        auto& rec = updated.records[i];
        if (rec.split == Split::kLabeled) continue;
        rec.split = Split::kLabeled;
        rec.label = stat.best_class;
        rec.pseudo_epoch = epoch;
        report.newly_labeled.push_back({rec.id, *stat.best_class, epoch});
      }
    }
    report.subgraphs.push_back(stat);
  }
  return {std::move(updated), std::move(report)};
}

}  // namespace ahgc
