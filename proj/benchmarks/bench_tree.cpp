#include <benchmark/benchmark.h>

#include "bench_common.hpp"
#include "simeval/tree.hpp"

namespace {

void BM_FitTree(benchmark::State& state) {
  const auto ds = bench::make_dataset(
      static_cast<std::size_t>(state.range(0)), 20, 1);
  const auto ts = bench::to_training_set(ds);
  simeval::Hyperparams hp;
  hp.family = simeval::ModelFamily::decision_tree;
  hp.min_samples_leaf = 5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(simeval::fit_tree(ts, hp));
  }
}
BENCHMARK(BM_FitTree)->Arg(500)->Arg(1000)->Arg(2000);

void BM_FitForest(benchmark::State& state) {
  const auto ds = bench::make_dataset(1000, 20, 2);
  const auto ts = bench::to_training_set(ds);
  simeval::Hyperparams hp;
  hp.n_trees = static_cast<std::size_t>(state.range(0));
  hp.min_samples_leaf = 5;
  hp.seed = 3;
  for (auto _ : state) {
    benchmark::DoNotOptimize(simeval::fit_forest(ts, hp));
  }
}
BENCHMARK(BM_FitForest)->Arg(10)->Arg(50)->Arg(100);

void BM_ForestPredict(benchmark::State& state) {
  const auto ds = bench::make_dataset(1000, 20, 4);
  const auto ts = bench::to_training_set(ds);
  simeval::Hyperparams hp;
  hp.n_trees = 100;
  hp.min_samples_leaf = 5;
  hp.seed = 5;
  const auto forest = simeval::fit_forest(ts, hp);
  const auto x = ds.transactions()[0].features;
  for (auto _ : state) {
    benchmark::DoNotOptimize(forest.predict(x));
  }
}
BENCHMARK(BM_ForestPredict);

}  // namespace

BENCHMARK_MAIN();
