#include "ahgc/metrics.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "ahgc/error.h"

namespace ahgc {
namespace {

void require_nonempty(std::span<const double> s, const char* what) {
  if (s.empty()) throw ValidationError(what, "score list is empty");
}

std::vector<double> sorted_desc(std::span<const double> s) {
  std::vector<double> v(s.begin(), s.end());
  std::sort(v.begin(), v.end(), std::greater<>());
  return v;
}

}  // namespace

double energy_score(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ValidationError("temperature", "must be a positive finite number");
  }
  if (logits.empty()) throw ValidationError("logits", "empty logit vector");
  double mx = -std::numeric_limits<double>::infinity();
  for (double l : logits) {
    if (!std::isfinite(l)) throw NumericalError("energy_score: non-finite logit");
    mx = std::max(mx, l / temperature);
  }
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l / temperature - mx);
  return temperature * (mx + std::log(sum));
}

Decision detect(double score, double delta) { return score <= delta ? Decision::kOod : Decision::kId; }

double threshold_at_tpr(std::span<const double> id_scores, double tpr) {
  require_nonempty(id_scores, "id_scores");
  if (!(tpr > 0.0 && tpr <= 1.0)) throw ValidationError("tpr", "must lie in (0, 1]");
  const auto v = sorted_desc(id_scores);
  const double n = static_cast<double>(v.size());
  auto c = static_cast<std::size_t>(std::ceil(tpr * n - 1e-9));
  c = std::clamp<std::size_t>(c, 1, v.size());
  return std::nextafter(v[c - 1], -std::numeric_limits<double>::infinity());
}

double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores, double tpr) {
  require_nonempty(ood_scores, "ood_scores");
  const double delta = threshold_at_tpr(id_scores, tpr);
  const auto above = std::count_if(ood_scores.begin(), ood_scores.end(), [delta](double s) { return s > delta; });
  return static_cast<double>(above) / static_cast<double>(ood_scores.size());
}

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  require_nonempty(id_scores, "id_scores");
  require_nonempty(ood_scores, "ood_scores");
  std::vector<double> ood(ood_scores.begin(), ood_scores.end());
  std::sort(ood.begin(), ood.end());
  // Twice the win count, so ties stay integral.
  std::uint64_t twice = 0;
  for (double s : id_scores) {
    const auto [lo, hi] = std::equal_range(ood.begin(), ood.end(), s);
    twice += 2 * static_cast<std::uint64_t>(lo - ood.begin()) + static_cast<std::uint64_t>(hi - lo);
  }
  const double pairs = static_cast<double>(id_scores.size()) * static_cast<double>(ood.size());
  return static_cast<double>(twice) / (2.0 * pairs);
}

double aupr(std::span<const double> id_scores, std::span<const double> ood_scores, Positive positive) {
  require_nonempty(id_scores, "id_scores");
  require_nonempty(ood_scores, "ood_scores");
  struct Item {
    double score;
    bool pos;
  };
  std::vector<Item> items;
  items.reserve(id_scores.size() + ood_scores.size());
  const bool in = positive == Positive::kIn;
  for (double s : id_scores) items.push_back({in ? s : -s, in});
  for (double s : ood_scores) items.push_back({in ? s : -s, !in});
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score > b.score; });

  const double total_pos = static_cast<double>(in ? id_scores.size() : ood_scores.size());
  std::size_t tp = 0;
  std::size_t fp = 0;
  double prev_recall = 0.0;
  double area = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    for (; j < items.size() && items[j].score == items[i].score; ++j) (items[j].pos ? tp : fp) += 1;
    const double recall = static_cast<double>(tp) / total_pos;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

double ccr_at_fpr(std::span<const ScoredSample> samples, double m) {
  if (!(m > 0.0 && m <= 1.0)) throw ValidationError("m", "must lie in (0, 1]");
  std::vector<double> ood;
  std::size_t n_id = 0;
  for (const auto& s : samples) {
    if (!s.origin) throw ValidationError("origin", "sample " + std::to_string(s.id) + " has no origin");
    if (*s.origin == Origin::kOod) {
      ood.push_back(s.score);
    } else {
      if (!s.true_label) throw ValidationError("true_label", "ID sample " + std::to_string(s.id) + " has no label");
      ++n_id;
    }
  }
  if (n_id == 0 || ood.empty()) throw ValidationError("samples", "both ID and OOD samples are required");
  std::sort(ood.begin(), ood.end(), std::greater<>());
  // At most `allowed` OOD scores may sit strictly above the threshold.
  const auto allowed = static_cast<std::size_t>(std::floor(m * static_cast<double>(ood.size()) + 1e-9));
  const double delta = allowed < ood.size() ? ood[allowed] : -std::numeric_limits<double>::infinity();
  std::size_t hits = 0;
  for (const auto& s : samples) {
    if (*s.origin == Origin::kId && s.score > delta && s.predicted_class == *s.true_label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n_id);
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["fpr95"] = fpr95;
  j["auroc"] = auroc;
  j["aupr_in"] = aupr_in;
  j["aupr_out"] = aupr_out;
  if (ccr_at) {
    nlohmann::json c = nlohmann::json::object();
    for (const auto& [key, value] : *ccr_at) c[key] = value;
    j["ccr_at"] = c;
  } else {
    j["ccr_at"] = nullptr;
  }
  j["id_accuracy"] = id_accuracy ? nlohmann::json(*id_accuracy) : nlohmann::json(nullptr);
  return j;
}

MetricsReport compute_metrics(std::span<const ScoredSample> samples) {
  std::vector<double> id_scores;
  std::vector<double> ood_scores;
  bool labels_complete = true;
  std::size_t correct = 0;
  for (const auto& s : samples) {
    if (!std::isfinite(s.score)) throw NumericalError("compute_metrics: non-finite score for id " + std::to_string(s.id));
    if (!s.origin) throw ValidationError("origin", "sample " + std::to_string(s.id) + " has no origin");
    if (*s.origin == Origin::kOod) {
      ood_scores.push_back(s.score);
      continue;
    }
    id_scores.push_back(s.score);
    if (!s.true_label) {
      labels_complete = false;
    } else if (s.predicted_class == *s.true_label) {
      ++correct;
    }
  }
  if (id_scores.empty() || ood_scores.empty()) {
    throw ValidationError("samples", "both ID and OOD samples are required");
  }
  MetricsReport r;
  r.fpr95 = fpr_at_tpr(id_scores, ood_scores, 0.95);
  r.auroc = auroc(id_scores, ood_scores);
  r.aupr_in = aupr(id_scores, ood_scores, Positive::kIn);
  r.aupr_out = aupr(id_scores, ood_scores, Positive::kOut);
  if (labels_complete) {
    std::map<std::string, double> ccr;
    for (const auto& [key, m] : ccr_levels()) ccr[key] = ccr_at_fpr(samples, m);
    r.ccr_at = std::move(ccr);
    r.id_accuracy = static_cast<double>(correct) / static_cast<double>(id_scores.size());
  }
  return r;
}

std::vector<ScoredSample> score_samples(std::span<const std::int64_t> ids, const FeatureMatrix& logits,
                                        double temperature, double delta) {
  if (static_cast<std::size_t>(logits.rows()) != ids.size()) {
    throw ValidationError("logits", "row count does not match the id list");
  }
  std::vector<ScoredSample> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto& s = out[i];
    const auto row = logits.row(static_cast<Eigen::Index>(i));
    s.id = ids[i];
    s.logits.assign(row.data(), row.data() + row.size());
    s.score = energy_score(s.logits, temperature);
    if (!std::isfinite(s.score)) throw NumericalError("score_samples: non-finite score for id " + std::to_string(s.id));
    s.predicted_class = static_cast<int>(std::max_element(s.logits.begin(), s.logits.end()) - s.logits.begin());
    s.decision = detect(s.score, delta);
  }
  return out;
}

}  // namespace ahgc
