#include <gtest/gtest.h>

#include <charconv>
#include <cstring>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "ahgc/error.h"
#include "ahgc/io.h"
#include "ahgc/objectives.h"
#include "ahgc/scorer.h"
#include "ahgc/tensor_io.h"
#include "test_support.h"

namespace ahgc {
namespace {

namespace fs = std::filesystem;

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("ahgc_io_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path file(const std::string& name, const std::string& text) const {
    const fs::path p = dir_ / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }

  fs::path dir_;
};

Dataset parse(const std::string& text, std::optional<int> num_classes = std::nullopt) {
  std::istringstream in(text);
  return read_dataset(in, "test", num_classes);
}

std::size_t parse_error_line(const std::string& text, std::optional<int> num_classes = std::nullopt) {
  try {
    parse(text, num_classes);
  } catch (const ParseError& e) {
    return e.line();
  }
  ADD_FAILURE() << "expected a parse error for:\n" << text;
  return 0;
}

TEST(FormatDouble, RoundTripsExactly) {
  Rng rng(5);
  std::uniform_int_distribution<std::uint64_t> bits;
  for (int i = 0; i < 10000; ++i) {
    double x = 0.0;
    do {
      const std::uint64_t b = bits(rng);
      std::memcpy(&x, &b, sizeof x);
    } while (!std::isfinite(x));
    const std::string s = format_double(x);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    ASSERT_EQ(std::memcmp(&x, &back, sizeof x), 0) << s;
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(-2.0), "-2");
}

TEST(ReadDataset, ParsesSmallFile) {
  const Dataset ds = parse("id,split,label,f0,f1\n0,L,1,0.5,0.25\n1,U,-,1,2\n2,L,0,-3,4e-3\n");
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.dim(), 2u);
  EXPECT_EQ(ds.num_classes, 2);
  EXPECT_EQ(ds.records[0].label, 1);
  EXPECT_EQ(ds.records[2].feature[1], 4e-3);
}

TEST(ReadDataset, UnlabeledRowHasNoLabel) {
  const Dataset ds = parse("id,split,label,f0,f1\n5,U,-,0.1,0.2\n");
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.records[0].id, 5);
  EXPECT_EQ(ds.records[0].split, Split::kUnlabeled);
  EXPECT_FALSE(ds.records[0].label.has_value());
}

TEST(ReadDataset, ErrorsCarryLineNumbers) {
  EXPECT_EQ(parse_error_line("id,split,label,f0,f1\n5,L,-,0.1,0.2\n"), 2u);
  EXPECT_EQ(parse_error_line("id,split,label,f0,f1\n1,U,-,1,2\n5,U,0,0.1,0.2\n"), 3u);
  EXPECT_EQ(parse_error_line("id,split,label,f0,f1\n1,U,-,1,2\n1,U,-,1,2\n"), 3u);
  EXPECT_EQ(parse_error_line("id,split,label,f0,f1\n1,U,-,1\n"), 2u);
  EXPECT_EQ(parse_error_line("id,split,label,f0,f1\n1,X,-,1,2\n"), 2u);
  EXPECT_EQ(parse_error_line("id,split,label,f0,f1\n1,U,-,1,abc\n"), 2u);
  EXPECT_EQ(parse_error_line("id,split,label,f0,f1\n1,U,-,1,nan\n"), 2u);
  EXPECT_EQ(parse_error_line("id,split,f0\n"), 1u);
  EXPECT_EQ(parse_error_line("id,split,label,f1\n"), 1u);
  EXPECT_EQ(parse_error_line(""), 0u);
  EXPECT_EQ(parse_error_line("id,split,label,f0\n0,L,3,1\n", 2), 2u);
}

TEST(ReadDataset, ToleratesCrlfAndBlankLines) {
  const Dataset ds = parse("id,split,label,f0\r\n\r\n0,L,0,1\r\n");
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.records[0].feature[0], 1.0);
}

Dataset random_dataset(Rng& rng) {
  Dataset ds;
  ds.num_classes = static_cast<int>(testing::uniform_size(rng, 1, 5));
  const std::size_t n = testing::uniform_size(rng, 1, 40);
  const std::size_t d = testing::uniform_size(rng, 1, 6);
  std::uniform_int_distribution<std::uint64_t> bits;
  for (std::size_t i = 0; i < n; ++i) {
    EmbeddingRecord r;
    r.id = static_cast<std::int64_t>(i * 3 + testing::uniform_size(rng, 0, 2));
    for (std::size_t c = 0; c < d; ++c) {
      double x = 0.0;
      if (testing::uniform_size(rng, 0, 3) == 0) {
        do {
          const std::uint64_t b = bits(rng);
          std::memcpy(&x, &b, sizeof x);
        } while (!std::isfinite(x));
      } else {
        x = testing::uniform_real(rng, -10.0, 10.0);
      }
      r.feature.push_back(x);
    }
    if (testing::uniform_size(rng, 0, 1) == 0) {
      r.split = Split::kLabeled;
      r.label = static_cast<int>(testing::uniform_size(rng, 0, static_cast<std::size_t>(ds.num_classes - 1)));
    }
    ds.records.push_back(std::move(r));
  }
  return ds;
}

TEST_F(IoTest, DatasetRoundTripsOverRandomInstances) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const Dataset ds = random_dataset(rng);
    const fs::path p = dir_ / "ds.csv";
    save_dataset(p, ds);
    EXPECT_EQ(load_dataset(p, ds.num_classes), ds) << "trial " << trial;
  }
}

TEST_F(IoTest, SidecarsRoundTrip) {
  Dataset ds = gen_synthetic(default_benchmark(2));
  save_origins(dir_ / "origin.csv", ds);
  save_truth(dir_ / "truth.csv", ds);
  save_dataset(dir_ / "ds.csv", ds);
  Dataset back = load_dataset(dir_ / "ds.csv", ds.num_classes);
  for (const auto& r : back.records) EXPECT_FALSE(r.origin.has_value());
  attach_origins(back, load_origins(dir_ / "origin.csv"));
  attach_truth(back, load_truth(dir_ / "truth.csv"));
  EXPECT_EQ(back, ds);
}

TEST_F(IoTest, SidecarErrors) {
  EXPECT_THROW(load_origins(file("o.csv", "id,origin\n1,maybe\n")), ParseError);
  EXPECT_THROW(load_origins(file("o2.csv", "id,origin\n1,ID\n1,OOD\n")), ParseError);
  EXPECT_THROW(load_truth(file("t.csv", "id,label\n")), ParseError);
  EXPECT_THROW(load_origins(dir_ / "missing.csv"), std::runtime_error);
  Dataset ds = parse("id,split,label,f0\n0,U,-,1\n1,U,-,2\n");
  EXPECT_THROW(attach_origins(ds, {{0, Origin::kId}}), ValidationError);
}

TEST_F(IoTest, PseudoLabelsRoundTripAndApply) {
  const std::vector<PseudoLabel> labels = {{1, 0, 3}, {4, 1, 7}};
  save_pseudo_labels(dir_ / "pl.csv", labels);
  EXPECT_EQ(load_pseudo_labels(dir_ / "pl.csv"), labels);

  Dataset ds = parse("id,split,label,f0\n0,L,0,1\n1,U,-,2\n4,U,-,3\n", 2);
  const Dataset applied = apply_pseudo_labels(ds, labels);
  EXPECT_EQ(applied.records[1].split, Split::kLabeled);
  EXPECT_EQ(applied.records[1].label, 0);
  EXPECT_EQ(applied.records[2].pseudo_epoch, 7);

  const std::vector<PseudoLabel> already = {{0, 1, 1}};
  EXPECT_THROW(apply_pseudo_labels(ds, already), ValidationError);
  const std::vector<PseudoLabel> unknown = {{9, 1, 1}};
  EXPECT_THROW(apply_pseudo_labels(ds, unknown), ValidationError);
  EXPECT_THROW(load_pseudo_labels(file("bad.csv", "id,pseudo_label,epoch_assigned\n1,0,1\n1,1,2\n")), ParseError);
}

TEST_F(IoTest, GraphRoundTripsWithLinkage) {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto c = testing::random_graph(rng, 30, 6, 4);
    std::vector<std::int64_t> ids(c.graph.n);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int64_t>(100 + 2 * i);
    const auto ld = testing::random_linkage(rng, c.graph);
    save_graph(dir_ / "g.csv", c.graph, ids, &ld);
    const GraphFile g = load_graph(dir_ / "g.csv");
    EXPECT_EQ(g.ids, ids);
    EXPECT_EQ(g.graph.n, c.graph.n);
    EXPECT_EQ(g.graph.k, c.graph.k);
    EXPECT_EQ(g.graph.neighbors, c.graph.neighbors);
    ASSERT_TRUE(g.p.has_value());
    EXPECT_EQ(*g.p, ld.p);
  }
}

TEST_F(IoTest, GraphErrors) {
  EXPECT_THROW(load_graph(file("a.csv", "src,dst\n")), ParseError);
  EXPECT_THROW(load_graph(file("b.csv", "src,dst,affinity\n0,0,1\n")), ParseError);
  EXPECT_THROW(load_graph(file("c.csv", "src,dst,affinity\n0,1,1\n1,0,1\n0,1,1\n")), ParseError);
  EXPECT_THROW(load_graph(file("d.csv", "src,dst,affinity\n0,1,1\n1,2,1\n")), ParseError);
  EXPECT_THROW(load_graph(file("e.csv", "src,dst,affinity,linkage\n0,1,1,1.5\n1,0,1,0.5\n")), ParseError);
  try {
    load_graph(file("f.csv", "src,dst,affinity\n0,1,1\n0,2,1\n1,0,1\n2,0,1\n2,1,1\n"));
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
}

TEST_F(IoTest, PartitionAndScoresRoundTrip) {
  const std::vector<std::size_t> assignment = {0, 0, 1, 2, 1};
  const std::vector<std::size_t> peaks = {1, 4, 3};
  const std::vector<std::int64_t> ids = {10, 11, 12, 13, 14};
  save_assignment(dir_ / "p.csv", assignment, peaks, ids);
  const PartitionFile pf = load_partition(dir_ / "p.csv");
  EXPECT_EQ(pf.ids, ids);
  EXPECT_EQ(pf.assignment, assignment);
  EXPECT_EQ(pf.is_peak, (std::vector<bool>{false, true, false, true, true}));

  std::vector<ScoredSample> scores(3);
  scores[0] = {.id = 1, .score = 0.123456789012345, .predicted_class = 1, .decision = Decision::kId};
  scores[1] = {.id = 2, .score = -4.5, .predicted_class = 0, .decision = Decision::kOod};
  scores[2] = {.id = 3, .score = 1e-300, .predicted_class = 2, .decision = Decision::kOod};
  save_scores(dir_ / "s.csv", scores);
  const auto back = load_scores(dir_ / "s.csv");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].id, scores[i].id);
    EXPECT_EQ(back[i].score, scores[i].score);
    EXPECT_EQ(back[i].predicted_class, scores[i].predicted_class);
    EXPECT_EQ(back[i].decision, scores[i].decision);
  }
  EXPECT_THROW(load_scores(file("bad.csv", "id,score,predicted_class,decision\n1,0.5,0,maybe\n")), ParseError);
  EXPECT_THROW(load_partition(file("bad2.csv", "node_id,subgraph,is_peak\n1,0,2\n")), ParseError);
}

TEST_F(IoTest, CheckpointsRoundTripBitExact) {
  const ScorerParams scorer = init_scorer(5, 7, 99);
  save_scorer(dir_ / "s.ckpt", scorer);
  const ScorerParams s2 = load_scorer(dir_ / "s.ckpt");
  EXPECT_EQ(s2.input_dim, scorer.input_dim);
  EXPECT_EQ(s2.hidden_dim, scorer.hidden_dim);
  EXPECT_EQ(s2.seed, scorer.seed);
  EXPECT_EQ(flatten(s2), flatten(scorer));

  const ClassifierParams clf = init_classifier(5, 4, 3, 12);
  save_classifier(dir_ / "c.ckpt", clf);
  const ClassifierParams c2 = load_classifier(dir_ / "c.ckpt");
  EXPECT_EQ(flatten(c2), flatten(clf));

  std::ofstream(dir_ / "junk.ckpt", std::ios::binary) << "NOTATENSORFILE";
  EXPECT_THROW(load_scorer(dir_ / "junk.ckpt"), ParseError);
}

TEST(TensorIo, TruncatedStreamIsAParseError) {
  std::ostringstream out;
  write_tensors(out, {{"w", Eigen::MatrixXd::Constant(2, 3, 1.5)}});
  const std::string bytes = out.str();
  for (std::size_t cut : {std::size_t{4}, std::size_t{12}, bytes.size() - 1}) {
    std::istringstream in(bytes.substr(0, cut));
    EXPECT_THROW(read_tensors(in), ParseError) << "cut at " << cut;
  }
  std::istringstream full(bytes);
  const auto back = read_tensors(full);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].name, "w");
  EXPECT_EQ(back[0].value, Eigen::MatrixXd::Constant(2, 3, 1.5));
}

}  // namespace
}  // namespace ahgc
