#include <benchmark/benchmark.h>

#include "bench_common.hpp"
#include "simeval/explain.hpp"

namespace {

struct ExplainFixture {
  simeval::Dataset dataset = bench::make_dataset(1000, 20, 7);
  simeval::Model model = [this] {
    simeval::Hyperparams hp;
    hp.n_trees = 100;
    hp.min_samples_leaf = 5;
    hp.seed = 11;
    return simeval::Model(
        simeval::fit_forest(bench::to_training_set(dataset), hp));
  }();
};

const ExplainFixture& fixture() {
  static const ExplainFixture fix;
  return fix;
}

void BM_TreeInterpreter(benchmark::State& state) {
  const auto& fix = fixture();
  const auto& x = fix.dataset.transactions()[3].features;
  for (auto _ : state) {
    benchmark::DoNotOptimize(simeval::tree_interpreter(fix.model, x));
  }
}
BENCHMARK(BM_TreeInterpreter);

void BM_TreeShap(benchmark::State& state) {
  const auto& fix = fixture();
  const auto& x = fix.dataset.transactions()[3].features;
  for (auto _ : state) {
    benchmark::DoNotOptimize(simeval::tree_shap(fix.model, x));
  }
}
BENCHMARK(BM_TreeShap);

void BM_Lime(benchmark::State& state) {
  const auto& fix = fixture();
  const auto stats = simeval::TrainStats::from(fix.dataset);
  const auto& x = fix.dataset.transactions()[3].features;
  simeval::LimeConfig cfg;
  cfg.n_samples = static_cast<std::size_t>(state.range(0));
  cfg.seed = 13;
  const auto predictor = [&](std::span<const double> row) {
    return simeval::predict_proba(fix.model, row);
  };
  for (auto _ : state) {
    benchmark::DoNotOptimize(simeval::lime_explain(predictor, x, stats, cfg));
  }
}
BENCHMARK(BM_Lime)->Arg(500)->Arg(2000)->Arg(5000);

void BM_SparsifyTopK(benchmark::State& state) {
  const auto& fix = fixture();
  const auto attribution =
      simeval::tree_shap(fix.model, fix.dataset.transactions()[3].features);
  for (auto _ : state) {
    benchmark::DoNotOptimize(simeval::sparsify_topk(attribution, 6));
  }
}
BENCHMARK(BM_SparsifyTopK);

}  // namespace
