#include <benchmark/benchmark.h>

#include <vector>

#include "bench_common.hpp"
#include "simeval/metrics.hpp"

namespace {

struct MetricsFixture {
  std::vector<std::uint8_t> decline;
  std::vector<int> labels;
  std::vector<double> amounts;

  explicit MetricsFixture(std::size_t n) {
    simeval::Rng rng(17);
    decline.resize(n);
    labels.resize(n);
    amounts.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = rng.bernoulli(0.2) ? 1 : 0;
      decline[i] = rng.bernoulli(0.25) ? 1 : 0;
      amounts[i] = 1.0 + 200.0 * rng.uniform01();
    }
  }
};

void BM_Pdr(benchmark::State& state) {
  const MetricsFixture fix(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        simeval::pdr(fix.decline, fix.labels, fix.amounts));
  }
}
BENCHMARK(BM_Pdr)->Arg(500)->Arg(5000);

void BM_BootstrapPivotalCi(benchmark::State& state) {
  const MetricsFixture fix(500);
  const auto statistic = [&](std::span<const std::size_t> idx) {
    std::vector<std::uint8_t> d(idx.size());
    std::vector<int> l(idx.size());
    std::vector<double> a(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      d[i] = fix.decline[idx[i]];
      l[i] = fix.labels[idx[i]];
      a[i] = fix.amounts[idx[i]];
    }
    return simeval::pdr(d, l, a);
  };
  for (auto _ : state) {
    benchmark::DoNotOptimize(simeval::bootstrap_pivotal_ci(
        statistic, 500,
        {static_cast<std::size_t>(state.range(0)), 0.10, 3}));
  }
}
BENCHMARK(BM_BootstrapPivotalCi)->Arg(200)->Arg(2000);

void BM_RocAuc(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  simeval::Rng rng(23);
  std::vector<double> scores(n);
  std::vector<int> targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = rng.uniform01();
    targets[i] = rng.bernoulli(0.3) ? 1 : 0;
  }
  targets[0] = 0;
  targets[1] = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(simeval::roc_auc(scores, targets));
  }
}
BENCHMARK(BM_RocAuc)->Arg(500)->Arg(2000);

}  // namespace
