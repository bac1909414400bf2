#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <vector>

#include "ahgc/error.h"
#include "ahgc/metrics.h"
#include "test_support.h"

namespace ahgc {
namespace {

using V = std::vector<double>;
constexpr double kInf = std::numeric_limits<double>::infinity();

TEST(EnergyScore, WorkedExamples) {
  EXPECT_NEAR(energy_score(V{0, 0}, 1.0), 0.6931471805599453, 1e-15);
  EXPECT_NEAR(energy_score(V{1, 0}, 1.0), 1.3132616875182228, 1e-15);
  EXPECT_NEAR(energy_score(V{2, 0}, 2.0), 2.6265233750364456, 1e-14);
  EXPECT_THROW(energy_score(V{1, 0}, 0.0), ValidationError);
  EXPECT_THROW(energy_score(V{1, 0}, -1.0), ValidationError);
  EXPECT_THROW(energy_score(V{kInf, 0}, 1.0), NumericalError);
}

TEST(EnergyScore, ShiftIdentityAndMonotonicity) {
  Rng rng(81);
  for (int trial = 0; trial < 1000; ++trial) {
    V logits(testing::uniform_size(rng, 1, 10));
    for (double& l : logits) l = testing::uniform_real(rng, -20, 20);
    const double t = testing::uniform_real(rng, 0.1, 5.0);
    const double c = testing::uniform_real(rng, -50, 50);
    V shifted = logits;
    for (double& l : shifted) l += c;
    const double base = energy_score(logits, t);
    EXPECT_NEAR(energy_score(shifted, t), base + c, 1e-12 * std::max(1.0, std::abs(base + c)));
    // Raising any logit never lowers the score; raising the largest strictly raises it.
    V raised = logits;
    raised[testing::uniform_size(rng, 0, logits.size() - 1)] += testing::uniform_real(rng, 0.5, 3.0);
    EXPECT_GE(energy_score(raised, t), base);
    V top = logits;
    *std::max_element(top.begin(), top.end()) += testing::uniform_real(rng, 0.5, 3.0);
    EXPECT_GT(energy_score(top, t), base);
  }
  // Large logits stay finite.
  EXPECT_NEAR(energy_score(V{1000, 1000}, 1.0), 1000 + std::log(2.0), 1e-12);
}

TEST(Detect, BoundaryIsOod) {
  EXPECT_EQ(detect(0.8, 0.7), Decision::kId);
  EXPECT_EQ(detect(0.7, 0.7), Decision::kOod);
  EXPECT_EQ(detect(0.6, 0.7), Decision::kOod);
}

TEST(ThresholdAtTpr, WorkedExamples) {
  const V flat(10, 1.0);
  const double d1 = threshold_at_tpr(flat, 0.95);
  EXPECT_LT(d1, 1.0);
  EXPECT_TRUE(std::all_of(flat.begin(), flat.end(), [d1](double s) { return s > d1; }));
  const V four = {0.9, 0.8, 0.7, 0.6};
  const double d2 = threshold_at_tpr(four, 0.95);
  EXPECT_LT(d2, 0.6);
  EXPECT_EQ(std::nextafter(d2, kInf), 0.6);
  EXPECT_THROW(threshold_at_tpr(V{}, 0.95), ValidationError);
  EXPECT_THROW(threshold_at_tpr(four, 0.0), ValidationError);
}

TEST(FprAtTpr, WorkedExamples) {
  EXPECT_EQ(fpr_at_tpr(V{0.9, 0.8}, V{0.1, 0.2}), 0.0);
  EXPECT_EQ(fpr_at_tpr(V{0.9, 0.8, 0.7, 0.6}, V{0.65, 0.5}), 0.5);
  EXPECT_THROW(fpr_at_tpr(V{0.9}, V{}), ValidationError);
}

TEST(Auroc, WorkedExamples) {
  EXPECT_EQ(auroc(V{0.8, 0.4}, V{0.6, 0.2}), 0.75);
  EXPECT_EQ(auroc(V{0.5, 0.5, 0.5}, V{0.5, 0.5}), 0.5);
  EXPECT_EQ(auroc(V{3, 4}, V{1, 2}), 1.0);
  EXPECT_THROW(auroc(V{}, V{1}), ValidationError);
}

TEST(Aupr, WorkedExamples) {
  EXPECT_EQ(aupr(V{3, 4}, V{1, 2}, Positive::kIn), 1.0);
  EXPECT_EQ(aupr(V{3, 4}, V{1, 2}, Positive::kOut), 1.0);
  EXPECT_NEAR(aupr(V{1, 2}, V{3, 4}, Positive::kOut), 0.5 / 3.0 + 0.25, 1e-15);
  const V negatives = {2, 3, 4, 5, 6, 7, 8, 9, 10};
  EXPECT_NEAR(aupr(V{1}, negatives, Positive::kIn), 0.1, 1e-15);
  EXPECT_THROW(aupr(V{}, V{1}, Positive::kIn), ValidationError);
}

// Random score lists; a coarse grid half the time so ties are frequent.
V random_scores(Rng& rng, std::size_t n, bool coarse) {
  V s(n);
  for (double& x : s) {
    x = coarse ? static_cast<double>(testing::uniform_size(rng, 0, 12)) / 4.0 : testing::uniform_real(rng, -3.0, 3.0);
  }
  return s;
}

std::size_t count_above(const V& s, double t) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [t](double x) { return x > t; }));
}

// Brute force over every candidate threshold: just below each score.
double oracle_threshold(const V& id, double tpr) {
  double best = -kInf;
  for (double s : id) {
    const double t = std::nextafter(s, -kInf);
    if (static_cast<double>(count_above(id, t)) / static_cast<double>(id.size()) >= tpr) best = std::max(best, t);
  }
  return best;
}

double oracle_auroc(const V& id, const V& ood) {
  std::uint64_t twice = 0;
  for (double a : id) {
    for (double b : ood) twice += a > b ? 2 : (a == b ? 1 : 0);
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(id.size()) * static_cast<double>(ood.size()));
}

double oracle_aupr(const V& pos, const V& neg) {
  std::set<double, std::greater<>> thresholds(pos.begin(), pos.end());
  thresholds.insert(neg.begin(), neg.end());
  double area = 0.0, prev = 0.0;
  for (double t : thresholds) {
    const auto tp = static_cast<double>(std::count_if(pos.begin(), pos.end(), [t](double x) { return x >= t; }));
    const auto fp = static_cast<double>(std::count_if(neg.begin(), neg.end(), [t](double x) { return x >= t; }));
    const double recall = tp / static_cast<double>(pos.size());
    area += (recall - prev) * (tp / (tp + fp));
    prev = recall;
  }
  return area;
}

V negated(const V& s) {
  V out(s);
  for (double& x : out) x = -x;
  return out;
}

TEST(Metrics, MatchBruteForceOracles) {
  Rng rng(82);
  for (int trial = 0; trial < 1000; ++trial) {
    const bool coarse = trial % 2 == 0;
    const std::size_t cap = trial < 900 ? 60 : 1000;
    const V id = random_scores(rng, testing::uniform_size(rng, 1, cap), coarse);
    const V ood = random_scores(rng, testing::uniform_size(rng, 1, cap), coarse);
    const double tpr = trial % 3 == 0 ? 0.95 : testing::uniform_real(rng, 0.01, 1.0);

    const double t = threshold_at_tpr(id, tpr);
    ASSERT_EQ(t, oracle_threshold(id, tpr)) << "trial " << trial;
    EXPECT_GE(static_cast<double>(count_above(id, t)) / static_cast<double>(id.size()), tpr);
    // One step up (the score the threshold sits below) no longer reaches tpr.
    const double up = std::nextafter(t, kInf);
    EXPECT_LT(static_cast<double>(count_above(id, up)) / static_cast<double>(id.size()), tpr);

    EXPECT_EQ(fpr_at_tpr(id, ood, tpr),
              static_cast<double>(count_above(ood, oracle_threshold(id, tpr))) / static_cast<double>(ood.size()));
    EXPECT_EQ(auroc(id, ood), oracle_auroc(id, ood));
    EXPECT_EQ(auroc(id, ood) + auroc(ood, id), 1.0);
    EXPECT_NEAR(aupr(id, ood, Positive::kIn), oracle_aupr(id, ood), 1e-12);
    EXPECT_NEAR(aupr(id, ood, Positive::kOut), oracle_aupr(negated(ood), negated(id)), 1e-12);
  }
}

std::vector<ScoredSample> random_samples(Rng& rng, std::size_t n_id, std::size_t n_ood, bool coarse) {
  std::vector<ScoredSample> out;
  const V id = random_scores(rng, n_id, coarse);
  const V ood = random_scores(rng, n_ood, coarse);
  for (std::size_t i = 0; i < n_id + n_ood; ++i) {
    ScoredSample s;
    s.id = static_cast<std::int64_t>(i);
    const bool is_id = i < n_id;
    s.score = is_id ? id[i] : ood[i - n_id];
    s.origin = is_id ? Origin::kId : Origin::kOod;
    s.predicted_class = static_cast<int>(testing::uniform_size(rng, 0, 2));
    if (is_id) s.true_label = static_cast<int>(testing::uniform_size(rng, 0, 2));
    out.push_back(s);
  }
  return out;
}

// Exhaustive: every OOD score and -inf as a threshold; keep the lowest one
// whose OOD-above fraction is within m.
double oracle_ccr(const std::vector<ScoredSample>& samples, double m) {
  V candidates = {-kInf};
  V ood;
  std::size_t n_id = 0;
  for (const auto& s : samples) {
    if (*s.origin == Origin::kOod) {
      ood.push_back(s.score);
      candidates.push_back(s.score);
    } else {
      ++n_id;
    }
  }
  double best = kInf;
  for (double t : candidates) {
    if (static_cast<double>(count_above(ood, t)) <= m * static_cast<double>(ood.size()) + 1e-9) best = std::min(best, t);
  }
  std::size_t hits = 0;
  for (const auto& s : samples) {
    if (*s.origin == Origin::kId && s.score > best && s.predicted_class == *s.true_label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n_id);
}

TEST(CcrAtFpr, WorkedExamples) {
  std::vector<ScoredSample> samples;
  for (int i = 0; i < 4; ++i) {
    samples.push_back({.id = i, .score = 5.0 + i, .predicted_class = i % 2, .origin = Origin::kId, .true_label = i % 2});
  }
  for (int i = 0; i < 4; ++i) samples.push_back({.id = 10 + i, .score = static_cast<double>(i), .origin = Origin::kOod});
  for (const auto& [key, m] : ccr_levels()) EXPECT_EQ(ccr_at_fpr(samples, m), 1.0) << key;
  samples[0].predicted_class = 1;
  samples[1].predicted_class = 0;
  EXPECT_EQ(ccr_at_fpr(samples, 0.1), 0.5);
  EXPECT_THROW(ccr_at_fpr(samples, 0.0), ValidationError);
}

TEST(CcrAtFpr, MatchesExhaustiveOracle) {
  Rng rng(83);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto samples = random_samples(rng, testing::uniform_size(rng, 1, 80), testing::uniform_size(rng, 1, 80), trial % 2 == 0);
    const double m = trial % 4 == 0 ? ccr_levels()[testing::uniform_size(rng, 0, 3)].second : testing::uniform_real(rng, 0.001, 1.0);
    ASSERT_EQ(ccr_at_fpr(samples, m), oracle_ccr(samples, m)) << "trial " << trial << " m " << m;
  }
}

TEST(Metrics, InvariantUnderIncreasingTransforms) {
  Rng rng(84);
  auto affine = [](double x) { return 2.5 * x + 3.0; };
  auto cubic = [](double x) { return x * x * x + x; };
  for (int trial = 0; trial < 300; ++trial) {
    auto samples = random_samples(rng, testing::uniform_size(rng, 1, 100), testing::uniform_size(rng, 1, 100), trial % 2 == 0);
    const MetricsReport base = compute_metrics(samples);
    for (int which = 0; which < 2; ++which) {
      auto moved = samples;
      for (auto& s : moved) s.score = which == 0 ? affine(s.score) : cubic(s.score);
      const MetricsReport r = compute_metrics(moved);
      EXPECT_EQ(r.fpr95, base.fpr95);
      EXPECT_EQ(r.auroc, base.auroc);
      EXPECT_EQ(r.aupr_in, base.aupr_in);
      EXPECT_EQ(r.aupr_out, base.aupr_out);
      EXPECT_EQ(r.ccr_at, base.ccr_at);
    }
  }
}

TEST(ComputeMetrics, ReportFieldsAndRanges) {
  Rng rng(85);
  auto samples = random_samples(rng, 50, 30, false);
  const MetricsReport r = compute_metrics(samples);
  for (double v : {r.fpr95, r.auroc, r.aupr_in, r.aupr_out, *r.id_accuracy}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  const auto j = r.to_json();
  for (const char* key : {"fpr95", "auroc", "aupr_in", "aupr_out", "ccr_at", "id_accuracy"}) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["ccr_at"].size(), 4u);

  samples[0].true_label.reset();
  const MetricsReport partial = compute_metrics(samples);
  EXPECT_FALSE(partial.ccr_at.has_value());
  EXPECT_TRUE(partial.to_json()["id_accuracy"].is_null());

  std::vector<ScoredSample> only_id(samples.begin(), samples.begin() + 50);
  EXPECT_THROW(compute_metrics(only_id), ValidationError);
}

TEST(ScoreSamples, EnergyArgmaxAndDecision) {
  FeatureMatrix logits(3, 2);
  logits << 0, 0, 1, 0, -5, -4;
  const std::vector<std::int64_t> ids = {7, 8, 9};
  const auto s = score_samples(ids, logits, 1.0, 0.7);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].decision, Decision::kOod);
  EXPECT_EQ(s[1].decision, Decision::kId);
  EXPECT_EQ(s[1].predicted_class, 0);
  EXPECT_EQ(s[2].predicted_class, 1);
  EXPECT_EQ(s[2].id, 9);
  EXPECT_EQ(s[1].score, energy_score(V{1, 0}, 1.0));
  EXPECT_THROW(score_samples(std::vector<std::int64_t>{1}, logits, 1.0, 0.7), ValidationError);
}

}  // namespace
}  // namespace ahgc
