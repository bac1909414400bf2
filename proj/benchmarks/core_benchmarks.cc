#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ahgc/decode.h"
#include "ahgc/knn_graph.h"
#include "ahgc/metrics.h"
#include "ahgc/rng.h"
#include "ahgc/scorer.h"

namespace ahgc {
namespace {

FeatureMatrix random_features(std::size_t n, std::size_t d) {
  Rng rng(7);
  std::normal_distribution<double> normal;
  FeatureMatrix f(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = normal(rng);
  return f;
}

void BM_BuildKnnGraph(benchmark::State& state) {
  const FeatureMatrix f = random_features(static_cast<std::size_t>(state.range(0)), 64);
  for (auto _ : state) benchmark::DoNotOptimize(build_knn_graph(f, 10));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_BuildKnnGraph)->Arg(250)->Arg(500)->Arg(1000)->Complexity();

void BM_ScorerForward(benchmark::State& state) {
  const FeatureMatrix f = random_features(static_cast<std::size_t>(state.range(0)), 64);
  const AffinityGraph g = build_knn_graph(f, 10);
  const ScorerParams params = init_scorer(64, 64, 1);
  for (auto _ : state) benchmark::DoNotOptimize(forward(params, g, f));
}
BENCHMARK(BM_ScorerForward)->Arg(250)->Arg(1000);

void BM_DecodeGraph(benchmark::State& state) {
  const FeatureMatrix f = random_features(static_cast<std::size_t>(state.range(0)), 64);
  const AffinityGraph g = build_knn_graph(f, 10);
  const LinkageDensity ld = forward(init_scorer(64, 64, 1), g, f);
  for (auto _ : state) benchmark::DoNotOptimize(decode_graph(g, ld, 0.3));
}
BENCHMARK(BM_DecodeGraph)->Arg(1000);

void BM_Metrics(benchmark::State& state) {
  Rng rng(11);
  std::normal_distribution<double> normal;
  std::vector<double> id(static_cast<std::size_t>(state.range(0))), ood(id.size());
  for (double& x : id) x = normal(rng) + 1.0;
  for (double& x : ood) x = normal(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(auroc(id, ood));
    benchmark::DoNotOptimize(fpr_at_tpr(id, ood));
    benchmark::DoNotOptimize(aupr(id, ood, Positive::kIn));
  }
}
BENCHMARK(BM_Metrics)->Arg(1000)->Arg(10000);

}  // namespace
}  // namespace ahgc
BENCHMARK_MAIN();
