#include <gtest/gtest.h>

#include <set>

#include "ahgc/error.h"
#include "ahgc/pipeline.h"
#include "ahgc/training.h"
#include "test_support.h"

namespace ahgc {
namespace {

Dataset small_dataset(std::uint64_t seed) {
  SyntheticSpec s;
  s.points_per_cluster = 15;
  s.dim = 8;
  s.seed = seed;
  return normalize_features(gen_synthetic(s));
}

TrainingConfig small_config() {
  TrainingConfig c;
  c.max_epochs = 4;
  c.scorer.hidden_dim = 16;
  c.scorer.steps = 20;
  c.pretrain_steps = 20;
  c.seed = 3;
  return c;
}

TEST(RunTraining, RejectsBadConfigs) {
  const Dataset ds = small_dataset(1);
  auto c = small_config();
  c.max_epochs = 0;
  EXPECT_THROW(run_training(ds, c), ValidationError);
  c = small_config();
  c.rho = 1.0;
  EXPECT_THROW(run_training(ds, c), ValidationError);
  c = small_config();
  c.scorer.virtual_ratio = -1.0;
  EXPECT_THROW(run_training(ds, c), ValidationError);
}

TEST(RunTraining, EveryClassNeedsALabeledSample) {
  Dataset ds = small_dataset(1);
  for (auto& r : ds.records) {
    if (r.label == 1) {
      r.label.reset();
      r.split = Split::kUnlabeled;
    }
  }
  EXPECT_THROW(run_training(ds, small_config()), ValidationError);
}

TEST(RunTraining, SameConfigGivesIdenticalReports) {
  const Dataset ds = small_dataset(2);
  const TrainingResult a = run_training(ds, small_config());
  const TrainingResult b = run_training(ds, small_config());
  ASSERT_EQ(a.epochs.size(), b.epochs.size());
  for (std::size_t e = 0; e < a.epochs.size(); ++e) EXPECT_EQ(a.epochs[e].to_json(), b.epochs[e].to_json());
  EXPECT_EQ(a.pseudo_labels, b.pseudo_labels);
  EXPECT_EQ(a.dataset, b.dataset);
}

TEST(RunTraining, TrainingNeverReadsGroundTruth) {
  const Dataset ds = small_dataset(4);
  Dataset blind = ds;
  for (auto& r : blind.records) {
    r.origin.reset();
    r.true_label.reset();
  }
  const TrainingResult a = run_training(ds, small_config());
  const TrainingResult b = run_training(blind, small_config());
  EXPECT_EQ(a.pseudo_labels, b.pseudo_labels);
  ASSERT_EQ(a.epochs.size(), b.epochs.size());
  EXPECT_EQ(a.epochs.back().to_json(), b.epochs.back().to_json());
}

class DefaultBenchmark : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dataset_ = new Dataset(normalize_features(gen_synthetic(default_benchmark(0))));
    PipelineConfig p;
    p.max_epochs = 20;
    TrainingConfig c = training_config(p);
    c.tol = 0.0;  // run all 20 epochs
    result_ = new TrainingResult(run_training(*dataset_, c));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete dataset_;
  }
  static Dataset* dataset_;
  static TrainingResult* result_;
};

Dataset* DefaultBenchmark::dataset_ = nullptr;
TrainingResult* DefaultBenchmark::result_ = nullptr;

TEST_F(DefaultBenchmark, LossDecreasesOverTwentyEpochs) {
  ASSERT_EQ(result_->epochs.size(), 20u);
  EXPECT_LT(result_->epochs.back().losses.total, result_->epochs.front().losses.total);
}

TEST_F(DefaultBenchmark, LabeledSetOnlyGrows) {
  std::size_t previous = 0;
  std::size_t added = 0;
  for (const auto& e : result_->epochs) {
    EXPECT_GE(e.labeled_total, previous);
    added += e.newly_labeled;
    previous = e.labeled_total;
  }
  EXPECT_EQ(added, result_->pseudo_labels.size());
  std::set<std::int64_t> ids;
  for (const auto& p : result_->pseudo_labels) EXPECT_TRUE(ids.insert(p.id).second) << "id " << p.id << " labeled twice";
  // Ground-truth labels are kept as they were.
  for (std::size_t i = 0; i < dataset_->size(); ++i) {
    if (dataset_->records[i].split == Split::kLabeled) {
      EXPECT_EQ(result_->dataset.records[i].label, dataset_->records[i].label);
    }
  }
}

TEST_F(DefaultBenchmark, PseudoLabelsAreAccurateAndIdOnly) {
  std::size_t correct = 0;
  for (const auto& p : result_->pseudo_labels) {
    for (const auto& r : dataset_->records) {
      if (r.id != p.id) continue;
      ASSERT_EQ(r.origin, Origin::kId) << "OOD record " << r.id << " was pseudo-labeled";
      correct += r.true_label == p.label ? 1 : 0;
    }
  }
  ASSERT_FALSE(result_->pseudo_labels.empty());
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(result_->pseudo_labels.size()), 0.9);
}

}  // namespace
}  // namespace ahgc
