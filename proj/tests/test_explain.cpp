#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "simeval/explain.hpp"
#include "support/oracles.hpp"

using namespace simeval;
using testsupport::contains;
using testsupport::error_message;
using testsupport::TempDir;

namespace {

double attribution_gap(const Model& model, const Attribution& a,
                       std::span<const double> x) {
  double sum = a.base_value;
  for (const double c : a.contributions) {
    sum += c;
  }
  return std::abs(sum - predict_proba(model, x));
}

Dataset stump_background() {
  // 70 rows in the left leaf, 30 in the right: background mean matches the
  // stump's cover-weighted root mean.
  std::vector<Transaction> rows;
  for (int i = 0; i < 100; ++i) {
    rows.push_back({"b" + std::to_string(i),
                    {i < 70 ? 0.0 : 1.0},
                    1.0,
                    0});
  }
  return Dataset(FeatureSchema::numeric(1), std::move(rows));
}

}  // namespace

TEST_SUITE("explainers") {

TEST_CASE("tree_interpreter: single leaf explains nothing") {
  const Model model = testsupport::leaf_tree(4, 0.37);
  const auto a = tree_interpreter(model, std::vector<double>{1, 2, 3, 4});
  CHECK(a.base_value == 0.37);
  for (const double c : a.contributions) {
    CHECK(c == 0.0);
  }
}

TEST_CASE("tree_interpreter: hand-traced depth-1 decomposition") {
  // root mean 0.28, split on feature 2, leaf means 0.10 / 0.70
  const Model model = testsupport::stump(4, 2, 5.0, 0.10, 0.70, 70, 30);
  const std::vector<double> x = {0, 0, 7, 0};
  const auto a = tree_interpreter(model, x);
  CHECK(std::abs(a.base_value - 0.28) <= 1e-12);
  CHECK(std::abs(a.contributions[2] - 0.42) <= 1e-12);
  CHECK(a.contributions[0] == 0.0);
  CHECK(a.contributions[1] == 0.0);
  CHECK(a.contributions[3] == 0.0);
  CHECK(std::abs(a.base_value + a.contributions[2] - 0.70) <= 1e-12);
}

TEST_CASE("tree_interpreter: efficiency within 1e-12 on random inputs") {
  const Model model = testsupport::random_forest_model(400, 6, 5, 15, 0);
  Rng rng(17);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> x(6);
    for (auto& v : x) {
      v = 3.0 * rng.normal();
    }
    const auto a = tree_interpreter(model, x);
    CHECK(attribution_gap(model, a, x) <= 1e-12);
  }
}

TEST_CASE("brute_force_shapley: constant model attributes nothing") {
  const Model model = testsupport::leaf_tree(3, 0.5);
  std::vector<Transaction> rows;
  for (int i = 0; i < 5; ++i) {
    rows.push_back({"b" + std::to_string(i), {0.0, 1.0, 2.0}, 1.0, 0});
  }
  const Dataset background(FeatureSchema::numeric(3), std::move(rows));
  const auto a =
      brute_force_shapley(model, std::vector<double>{1, 1, 1}, background);
  CHECK(a.base_value == 0.5);
  for (const double c : a.contributions) {
    CHECK(c == 0.0);
  }
}

TEST_CASE("brute_force_shapley: one-feature stump by two-subset enumeration") {
  const Model model = testsupport::stump(1, 0, 0.5, 0.10, 0.70, 70, 30);
  const auto background = stump_background();
  const std::vector<double> x = {1.0};  // right leaf
  const auto a = brute_force_shapley(model, x, background);
  CHECK(std::abs(a.base_value - 0.28) <= 1e-12);
  CHECK(std::abs(a.contributions[0] - 0.42) <= 1e-12);
}

TEST_CASE("brute_force_shapley: symmetry axiom") {
  // forest of two mirrored stumps, symmetric in features 1 and 2
  Hyperparams hp;
  hp.n_trees = 2;
  const Model model = Forest({testsupport::stump(4, 1, 0.0, 0.2, 0.6),
                              testsupport::stump(4, 2, 0.0, 0.2, 0.6)},
                             hp);
  std::vector<Transaction> rows;
  int id = 0;
  for (const double u : {-1.0, 1.0}) {
    for (const double v : {-1.0, 1.0}) {
      rows.push_back({"b" + std::to_string(id++), {0.0, u, v, 0.0}, 1.0, 0});
    }
  }
  const Dataset background(FeatureSchema::numeric(4), std::move(rows));
  const std::vector<double> x = {0.3, 0.5, 0.5, -0.2};
  const auto a = brute_force_shapley(model, x, background);
  CHECK(std::abs(a.contributions[1] - a.contributions[2]) <= 1e-12);
}

TEST_CASE("brute_force_shapley: refuses wide inputs, names the limit") {
  const Model model = testsupport::leaf_tree(16, 0.5);
  std::vector<Transaction> rows = {
      {"b0", std::vector<double>(16, 0.0), 1.0, 0}};
  const Dataset background(FeatureSchema::numeric(16), std::move(rows));
  const auto message = error_message<ComputeError>([&] {
    brute_force_shapley(model, std::vector<double>(16, 0.0), background);
  });
  CHECK(contains(message, "15"));
}

TEST_CASE("tree_shap: single leaf") {
  const Model model = testsupport::leaf_tree(3, 0.44);
  const auto a = tree_shap(model, std::vector<double>{0, 0, 0});
  CHECK(a.base_value == 0.44);
  for (const double c : a.contributions) {
    CHECK(c == 0.0);
  }
}

TEST_CASE("tree_shap: on stumps the interventional and path-dependent value "
          "functions coincide") {
  const Model model = testsupport::stump(1, 0, 0.5, 0.10, 0.70, 70, 30);
  const auto background = stump_background();
  for (const double xv : {0.0, 1.0}) {
    const std::vector<double> x = {xv};
    const auto fast = tree_shap(model, x);
    const auto oracle = brute_force_shapley(model, x, background);
    CHECK(std::abs(fast.base_value - oracle.base_value) <= 1e-12);
    CHECK(std::abs(fast.contributions[0] - oracle.contributions[0]) <= 1e-12);
  }
}

TEST_CASE("tree_shap: matches the enumeration oracle on random forests") {
  // smaller version of the acceptance criterion; d=6, depth <= 4
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Model model = testsupport::random_forest_model(250, 6, seed, 8, 4);
    Rng rng(seed + 100);
    for (int i = 0; i < 25; ++i) {
      std::vector<double> x(6);
      for (auto& v : x) {
        v = 3.0 * rng.normal();
      }
      const auto fast = tree_shap(model, x);
      const auto oracle = brute_force_shapley_conditional(model, x);
      CHECK(std::abs(fast.base_value - oracle.base_value) <= 1e-9);
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(std::abs(fast.contributions[j] - oracle.contributions[j]) <=
              1e-9);
      }
    }
  }
}

TEST_CASE("tree_shap: efficiency within 1e-9 on random inputs") {
  const Model model = testsupport::random_forest_model(400, 6, 9, 15, 0);
  Rng rng(23);
  for (int i = 0; i < 300; ++i) {
    std::vector<double> x(6);
    for (auto& v : x) {
      v = 3.0 * rng.normal();
    }
    const auto a = tree_shap(model, x);
    CHECK(attribution_gap(model, a, x) <= 1e-9);
  }
}

TEST_CASE("tree_shap: repeated feature along a path matches the oracle") {
  // f0 splits at the root and again inside its right child
  std::vector<TreeNode> nodes(7);
  nodes[0] = {0, 0.0, 0.405, 100, 1, 2};
  nodes[1] = {1, 0.0, 0.2, 60, 3, 4};
  nodes[2] = {0, 1.0, 0.7125, 40, 5, 6};
  nodes[3] = {-1, 0.0, 0.1, 30, -1, -1};
  nodes[4] = {-1, 0.0, 0.3, 30, -1, -1};
  nodes[5] = {-1, 0.0, 0.6, 25, -1, -1};
  nodes[6] = {-1, 0.0, 0.9, 15, -1, -1};
  const Model model = DecisionTree(std::move(nodes), 2);

  for (const auto& x : std::vector<std::vector<double>>{
           {0.5, -1.0}, {2.0, 0.5}, {-1.0, 1.0}, {1.0, 0.0}}) {
    const auto fast = tree_shap(model, x);
    const auto oracle = brute_force_shapley_conditional(model, x);
    CHECK(std::abs(fast.base_value - oracle.base_value) <= 1e-12);
    CHECK(std::abs(fast.contributions[0] - oracle.contributions[0]) <= 1e-12);
    CHECK(std::abs(fast.contributions[1] - oracle.contributions[1]) <= 1e-12);
    CHECK(std::abs(fast.base_value - 0.405) <= 1e-12);
    const double total =
        fast.base_value + fast.contributions[0] + fast.contributions[1];
    CHECK(std::abs(total - predict_proba(model, x)) <= 1e-12);
  }
}

TEST_CASE("tree_shap: zero-cover node is an explainer error") {
  std::vector<TreeNode> nodes(3);
  nodes[0].feature = 0;
  nodes[0].threshold = 0.0;
  nodes[0].cover = 10;
  nodes[0].node_mean = 0.5;
  nodes[0].left = 1;
  nodes[0].right = 2;
  nodes[1].cover = 0;  // corrupted statistics
  nodes[1].node_mean = 0.0;
  nodes[2].cover = 10;
  nodes[2].node_mean = 0.5;
  const Model model = DecisionTree(std::move(nodes), 1);
  CHECK_THROWS_AS(tree_shap(model, std::vector<double>{0.0}), ComputeError);
}

TEST_CASE("dummy feature receives exactly zero from both tree explainers") {
  auto ds = testsupport::random_dataset(300, 6, 33);
  std::vector<Transaction> rows = ds.transactions();
  for (auto& t : rows) {
    t.features[5] = 1.25;  // constant: no split can use it
  }
  const Dataset constant_ds(ds.schema(), std::move(rows));
  Hyperparams hp;
  hp.n_trees = 10;
  hp.min_samples_leaf = 5;
  hp.seed = 7;
  const Model model =
      fit_forest(testsupport::training_set_from(constant_ds), hp);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> x(6);
    for (auto& v : x) {
      v = rng.normal();
    }
    CHECK(tree_interpreter(model, x).contributions[5] == 0.0);
    CHECK(tree_shap(model, x).contributions[5] == 0.0);
  }
}

TEST_CASE("lime: constant model yields (near-)zero coefficients") {
  const auto ds = testsupport::random_dataset(200, 5, 43);
  const auto stats = TrainStats::from(ds);
  LimeConfig cfg;
  cfg.n_samples = 800;
  cfg.seed = 5;
  const auto a = lime_explain(
      [](std::span<const double>) { return 0.4; },
      ds.transactions()[0].features, stats, cfg);
  for (const double c : a.contributions) {
    CHECK(std::abs(c) <= 1e-6);
  }
  CHECK(std::abs(a.base_value - 0.4) <= 1e-6);
}

TEST_CASE("lime: recovers a linear single-feature model; solve matches a "
          "direct normal-equations oracle") {
  const auto ds = testsupport::random_dataset(300, 5, 53);
  const auto stats = TrainStats::from(ds);
  const std::size_t d = 5;
  const auto model = [&](std::span<const double> x) {
    const double sd = stats.stddev[1] > 0.0 ? stats.stddev[1] : 1.0;
    return (x[1] - stats.mean[1]) / sd;
  };
  LimeConfig cfg;
  cfg.n_samples = 400;
  cfg.kernel_width = 0.75 * std::sqrt(static_cast<double>(d));
  cfg.ridge_penalty = 1.0;
  cfg.seed = 11;
  const auto a = lime_explain(model, ds.transactions()[0].features, stats, cfg);

  for (std::size_t j = 0; j < d; ++j) {
    if (j != 1) {
      CHECK(std::abs(a.contributions[1]) > std::abs(a.contributions[j]));
    }
  }

  // oracle: replicate the documented sampling procedure, then solve the
  // penalized normal equations with Gauss-Jordan instead of the library path
  Rng rng(cfg.seed);
  const auto& x0 = ds.transactions()[0].features;
  std::vector<double> zx(d);
  std::vector<double> sd_eff(d);
  for (std::size_t j = 0; j < d; ++j) {
    sd_eff[j] = stats.stddev[j] > 0.0 ? stats.stddev[j] : 1.0;
    zx[j] = (x0[j] - stats.mean[j]) / sd_eff[j];
  }
  const std::size_t w = d + 1;
  std::vector<std::vector<double>> gram(w, std::vector<double>(w, 0.0));
  std::vector<double> rhs(w, 0.0);
  std::vector<double> z(d);
  std::vector<double> raw(d);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      z[j] = rng.normal();
      raw[j] = stats.mean[j] + z[j] * sd_eff[j];
    }
    double dist2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dist2 += (z[j] - zx[j]) * (z[j] - zx[j]);
    }
    const double weight =
        std::exp(-dist2 / (cfg.kernel_width * cfg.kernel_width));
    const double y = model(raw);
    std::vector<double> row(w, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
      row[j + 1] = z[j];
    }
    for (std::size_t r = 0; r < w; ++r) {
      rhs[r] += weight * y * row[r];
      for (std::size_t c = 0; c < w; ++c) {
        gram[r][c] += weight * row[r] * row[c];
      }
    }
  }
  for (std::size_t j = 1; j < w; ++j) {
    gram[j][j] += cfg.ridge_penalty;
  }
  const auto beta = testsupport::gauss_jordan_solve(gram, rhs);
  CHECK(std::abs(a.base_value - beta[0]) <= 1e-8);
  for (std::size_t j = 0; j < d; ++j) {
    CHECK(std::abs(a.contributions[j] - beta[j + 1]) <= 1e-8);
  }
}

TEST_CASE("lime: symmetric model gives balanced coefficients over seeds") {
  const auto ds = testsupport::random_dataset(300, 4, 63);
  const auto stats = TrainStats::from(ds);
  const auto model = [&](std::span<const double> x) {
    const double s1 = stats.stddev[1] > 0.0 ? stats.stddev[1] : 1.0;
    const double s2 = stats.stddev[2] > 0.0 ? stats.stddev[2] : 1.0;
    return (x[1] - stats.mean[1]) / s1 + (x[2] - stats.mean[2]) / s2;
  };
  LimeConfig cfg;
  cfg.n_samples = 3000;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    cfg.seed = seed;
    const auto a =
        lime_explain(model, ds.transactions()[0].features, stats, cfg);
    const double w1 = std::abs(a.contributions[1]);
    const double w2 = std::abs(a.contributions[2]);
    CHECK(std::abs(w1 - w2) <= 0.05 * std::max(w1, w2));
  }
}

TEST_CASE("lime: determinism and validation") {
  const auto ds = testsupport::random_dataset(100, 4, 73);
  const auto stats = TrainStats::from(ds);
  const auto model = [](std::span<const double> x) {
    return x[0] > 0 ? 0.8 : 0.2;
  };
  LimeConfig cfg;
  cfg.n_samples = 300;
  cfg.seed = 21;
  const auto a = lime_explain(model, ds.transactions()[0].features, stats, cfg);
  const auto b = lime_explain(model, ds.transactions()[0].features, stats, cfg);
  CHECK(a.contributions == b.contributions);  // bit-for-bit
  CHECK(a.base_value == b.base_value);

  LimeConfig too_few;
  too_few.n_samples = 4;  // d + 2 = 6
  CHECK_THROWS_AS(
      lime_explain(model, ds.transactions()[0].features, stats, too_few),
      ConfigError);
  LimeConfig bad_ridge;
  bad_ridge.ridge_penalty = -1.0;
  CHECK_THROWS_AS(
      lime_explain(model, ds.transactions()[0].features, stats, bad_ridge),
      ConfigError);
}

TEST_CASE("lime: categorical features enter as match indicators") {
  const FeatureSchema schema({
      {"num", FeatureKind::numeric, {}},
      {"cat", FeatureKind::categorical, {"a", "b"}},
  });
  std::vector<Transaction> rows;
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    rows.push_back({"t" + std::to_string(i),
                    {rng.normal(), i % 4 == 0 ? 1.0 : 0.0},
                    1.0,
                    0});
  }
  const Dataset ds(schema, std::move(rows));
  const auto stats = TrainStats::from(ds);
  REQUIRE(stats.category_freq[1].size() == 2);
  CHECK(stats.category_freq[1][1] == doctest::Approx(0.25));

  // model keyed entirely on the categorical feature
  const auto model = [](std::span<const double> x) {
    return x[1] == 1.0 ? 0.9 : 0.1;
  };
  LimeConfig cfg;
  cfg.n_samples = 2000;
  cfg.seed = 9;
  const std::vector<double> x = {0.0, 1.0};
  const auto a = lime_explain(model, x, stats, cfg);
  CHECK(std::abs(a.contributions[1]) > std::abs(a.contributions[0]));
  CHECK(a.contributions[1] > 0.0);  // matching the category raises the score
}

TEST_CASE("sparsify_topk: magnitude selection, identity and tie-break") {
  Attribution a;
  a.contributions = {0.3, -0.5, 0.1, 0.0};
  a.base_value = 0.2;
  const auto top2 = sparsify_topk(a, 2);
  REQUIRE(top2.entries.size() == 2);
  CHECK(top2.entries[0] == std::pair<std::size_t, double>{0, 0.3});
  CHECK(top2.entries[1] == std::pair<std::size_t, double>{1, -0.5});
  CHECK(top2.base_value == 0.2);

  const auto full = sparsify_topk(a, 4);
  CHECK(full.dense() == std::vector<double>{0.3, -0.5, 0.1, 0.0});

  Attribution ties;
  ties.contributions = {0.2, -0.2, 0.2};
  const auto tied = sparsify_topk(ties, 2);
  REQUIRE(tied.entries.size() == 2);
  CHECK(tied.entries[0].first == 0);
  CHECK(tied.entries[1].first == 1);

  CHECK_THROWS_AS(sparsify_topk(a, 0), ConfigError);
  CHECK_THROWS_AS(sparsify_topk(a, 5), ConfigError);
}

TEST_CASE("sparsify_topk: idempotent on random attributions") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    Attribution a;
    a.contributions.resize(10);
    for (auto& c : a.contributions) {
      c = rng.normal();
    }
    const auto once = sparsify_topk(a, 4);
    Attribution again;
    again.contributions = once.dense();
    again.base_value = once.base_value;
    again.explainer = once.explainer;
    const auto twice = sparsify_topk(again, 4);
    CHECK(once.entries == twice.entries);
  }
}

TEST_CASE("explanations file: round trip with sentinel padding") {
  TempDir dir;
  ExplanationSet set;
  set.explainer = ExplainerKind::tree_shap;
  set.d = 6;
  set.k = 3;
  Explanation full;
  full.d = 6;
  full.k = 3;
  full.explainer = ExplainerKind::tree_shap;
  full.base_value = 0.25;
  full.entries = {{1, 0.5}, {4, -0.25}, {5, 0.125}};
  Explanation sparse = full;
  sparse.entries = {{2, 0.75}};
  set.add("a", full);
  set.add("b", sparse);
  save_explanations(set, dir.file("e.csv"));

  std::ifstream in(dir.file("e.csv"));
  std::string header;
  std::getline(in, header);
  CHECK(header == "id,explainer,base_value,j0,v0,j1,v1,j2,v2");
  std::string row_a;
  std::string row_b;
  std::getline(in, row_a);
  std::getline(in, row_b);
  CHECK(contains(row_b, "-1,0"));  // padded row

  const auto loaded = load_explanations(dir.file("e.csv"), 6);
  CHECK(loaded.explainer == ExplainerKind::tree_shap);
  CHECK(loaded.k == 3);
  CHECK(loaded.d == 6);
  REQUIRE(loaded.ids.size() == 2);
  CHECK(loaded.find("a")->entries == full.entries);
  CHECK(loaded.find("b")->entries == sparse.entries);
  CHECK(loaded.find("a")->base_value == 0.25);

  // malformed inputs
  std::ofstream bad(dir.file("bad.csv"));
  bad << "id,explainer,base_value,j0,v0\n"
      << "a,tree_shap,0,1,0.5\n"
      << "b,lime,0,1,0.5\n";
  bad.close();
  CHECK(contains(
      error_message<DataError>([&] { load_explanations(dir.file("bad.csv")); }),
      "mixed explainer"));
}

}  // TEST_SUITE
