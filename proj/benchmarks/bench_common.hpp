#pragma once

#include "simeval/data.hpp"
#include "simeval/tree.hpp"

namespace bench {

inline simeval::Dataset make_dataset(std::size_t n, std::size_t d,
                                     std::uint64_t seed) {
  simeval::SyntheticConfig cfg;
  cfg.n = n;
  cfg.d = d;
  cfg.fraud_rate = 0.2;
  cfg.signal.features = {0, 1, 2};
  cfg.signal.noise = 0.1;
  cfg.seed = seed;
  return simeval::generate_synthetic(cfg);
}

inline simeval::TrainingSet to_training_set(const simeval::Dataset& ds) {
  simeval::TrainingSet ts;
  ts.x = simeval::Matrix(ds.size(), ds.d());
  ts.labels.resize(ds.size());
  ts.ids.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& t = ds.transactions()[i];
    std::copy(t.features.begin(), t.features.end(), ts.x.row(i).begin());
    ts.labels[i] = t.label;
    ts.ids[i] = t.id;
  }
  return ts;
}

}  // namespace bench
