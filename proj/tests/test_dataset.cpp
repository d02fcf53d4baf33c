#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "simeval/data.hpp"
#include "support/oracles.hpp"

using namespace simeval;
using testsupport::contains;
using testsupport::error_message;
using testsupport::TempDir;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

FeatureSchema mixed_schema() {
  return FeatureSchema({
      {"amount_z", FeatureKind::numeric, {}},
      {"country", FeatureKind::categorical, {"de", "fr", "us"}},
      {"velocity", FeatureKind::numeric, {}},
  });
}

}  // namespace

TEST_SUITE("dataset_core") {

TEST_CASE("schema validation") {
  CHECK_THROWS_AS(FeatureSchema({{"a", FeatureKind::numeric, {}},
                                 {"a", FeatureKind::numeric, {}}}),
                  ConfigError);
  CHECK_THROWS_AS(FeatureSchema({{"c", FeatureKind::categorical, {"only"}}}),
                  ConfigError);
  CHECK_THROWS_AS(
      FeatureSchema({{"c", FeatureKind::categorical, {"x", "x", "y"}}}),
      ConfigError);
  const auto schema = mixed_schema();
  CHECK(schema.d() == 3);
  CHECK(schema.encode(1, "fr") == 1.0);
  CHECK(schema.decode(1, 2.0) == "us");
  CHECK_THROWS_AS(schema.encode(1, "xx"), DataError);
  CHECK(schema.index_of("velocity") == 2);
}

TEST_CASE("dataset invariants") {
  const auto schema = FeatureSchema::numeric(2);
  Transaction ok{"a", {1.0, 2.0}, 10.0, 0};
  CHECK_THROWS_AS(Dataset(schema, {ok, ok}), DataError);  // duplicate id
  Transaction bad_amount{"b", {1.0, 2.0}, 0.0, 0};
  CHECK(contains(error_message<DataError>(
                     [&] { Dataset(schema, {bad_amount}); }),
                 "non-positive amount"));
  Transaction bad_len{"c", {1.0}, 10.0, 0};
  CHECK_THROWS_AS(Dataset(schema, {bad_len}), DataError);
  Transaction bad_label{"d", {1.0, 2.0}, 10.0, 2};
  CHECK_THROWS_AS(Dataset(schema, {bad_label}), DataError);
}

TEST_CASE("load_transactions: header only gives empty dataset") {
  TempDir dir;
  write_file(dir.file("t.csv"), "id,amount,label,f0,f1\n");
  const auto ds = load_transactions(dir.file("t.csv"), FeatureSchema::numeric(2));
  CHECK(ds.size() == 0);
}

TEST_CASE("load_transactions: non-positive amount names the row") {
  TempDir dir;
  write_file(dir.file("t.csv"),
             "id,amount,label,f0,f1\n"
             "a,10,0,1,2\n"
             "b,0,1,3,4\n");
  const auto message = error_message<DataError>(
      [&] { load_transactions(dir.file("t.csv"), FeatureSchema::numeric(2)); });
  CHECK(contains(message, "non-positive amount"));
  CHECK(contains(message, "row 2"));
}

TEST_CASE("load_transactions: malformed rows name row and cause") {
  TempDir dir;
  const auto schema = mixed_schema();
  const std::string header = "id,amount,label,amount_z,country,velocity\n";

  write_file(dir.file("short.csv"), header + "a,10,0,1,de\n");
  CHECK(contains(error_message<DataError>(
                     [&] { load_transactions(dir.file("short.csv"), schema); }),
                 "expected 6 fields"));

  write_file(dir.file("cat.csv"), header + "a,10,0,1,nowhere,2\n");
  const auto cat_message = error_message<DataError>(
      [&] { load_transactions(dir.file("cat.csv"), schema); });
  CHECK(contains(cat_message, "unknown category"));
  CHECK(contains(cat_message, "row 1"));

  write_file(dir.file("dup.csv"), header + "a,10,0,1,de,2\na,11,1,2,fr,3\n");
  CHECK(contains(error_message<DataError>(
                     [&] { load_transactions(dir.file("dup.csv"), schema); }),
                 "duplicate id"));

  write_file(dir.file("label.csv"), header + "a,10,7,1,de,2\n");
  CHECK(contains(error_message<DataError>(
                     [&] { load_transactions(dir.file("label.csv"), schema); }),
                 "label"));

  write_file(dir.file("bad_header.csv"), "id,amount,f0\n");
  CHECK_THROWS_AS(load_transactions(dir.file("bad_header.csv"), schema),
                  DataError);
}

TEST_CASE("transactions round trip is byte stable") {
  TempDir dir;
  const auto schema = mixed_schema();
  write_file(dir.file("t.csv"),
             "id,amount,label,amount_z,country,velocity\n"
             "a,10.25,0,0.1,de,-3\n"
             "b,0.125,1,2.5,us,0.333333333333333314829616256247\n"
             "c,99,0,-0.75,fr,12\n");
  const auto ds = load_transactions(dir.file("t.csv"), schema);
  CHECK(ds.size() == 3);
  save_transactions(ds, dir.file("t1.csv"));
  const auto ds2 = load_transactions(dir.file("t1.csv"), schema);
  save_transactions(ds2, dir.file("t2.csv"));
  // write-then-load fixpoint: bytes equal after the first normalization pass
  CHECK(read_file(dir.file("t1.csv")) == read_file(dir.file("t2.csv")));
  // and values survive exactly
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& a = ds.transactions()[i];
    const auto& b = ds2.transactions()[i];
    CHECK(a.id == b.id);
    CHECK(a.amount == b.amount);
    CHECK(a.label == b.label);
    CHECK(a.features == b.features);
  }
}

TEST_CASE("load_transactions: hostile numeric cells and CRLF endings") {
  TempDir dir;
  const auto schema = FeatureSchema::numeric(1);

  write_file(dir.file("crlf.csv"), "id,amount,label,f0\r\na,10,0,1.5\r\n");
  const auto ds = load_transactions(dir.file("crlf.csv"), schema);
  CHECK(ds.size() == 1);
  CHECK(ds.by_id("a").features[0] == 1.5);

  write_file(dir.file("overflow.csv"), "id,amount,label,f0\na,1e999,0,1\n");
  CHECK_THROWS_AS(load_transactions(dir.file("overflow.csv"), schema),
                  DataError);

  write_file(dir.file("nan.csv"), "id,amount,label,f0\na,10,0,nan\n");
  CHECK_THROWS_AS(load_transactions(dir.file("nan.csv"), schema), DataError);

  write_file(dir.file("inf.csv"), "id,amount,label,f0\na,inf,0,1\n");
  CHECK_THROWS_AS(load_transactions(dir.file("inf.csv"), schema), DataError);

  // trailing garbage after a number is rejected
  write_file(dir.file("suffix.csv"), "id,amount,label,f0\na,10x,0,1\n");
  CHECK_THROWS_AS(load_transactions(dir.file("suffix.csv"), schema),
                  DataError);
}

TEST_CASE("load_transactions infers a numeric schema from the header") {
  TempDir dir;
  write_file(dir.file("t.csv"), "id,amount,label,x,y\na,5,1,0.5,-1\n");
  const auto ds = load_transactions(dir.file("t.csv"));
  CHECK(ds.d() == 2);
  CHECK(ds.schema().feature(0).name == "x");
  CHECK(ds.by_id("a").features[1] == -1.0);
}

TEST_CASE("generate_synthetic: determinism") {
  SyntheticConfig cfg;
  cfg.n = 200;
  cfg.d = 8;
  cfg.signal.features = {0, 1};
  cfg.seed = 7;
  const auto a = generate_synthetic(cfg);
  const auto b = generate_synthetic(cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.transactions()[i].id == b.transactions()[i].id);
    CHECK(a.transactions()[i].features == b.transactions()[i].features);
    CHECK(a.transactions()[i].amount == b.transactions()[i].amount);
    CHECK(a.transactions()[i].label == b.transactions()[i].label);
  }
}

TEST_CASE("generate_synthetic: noiseless planted rule holds exactly") {
  SyntheticConfig cfg;
  cfg.n = 500;
  cfg.d = 4;
  cfg.signal.features = {0};
  cfg.signal.threshold = 0.0;
  cfg.signal.noise = 0.0;
  cfg.seed = 11;
  const auto ds = generate_synthetic(cfg);
  for (const auto& t : ds.transactions()) {
    CHECK(t.label == (t.features[0] > 0.0 ? 1 : 0));
    CHECK(t.amount > 0.0);
  }
}

TEST_CASE("generate_synthetic: empirical fraud rate within exact binomial "
          "99% interval") {
  SyntheticConfig cfg;
  cfg.n = 2000;
  cfg.d = 8;
  cfg.fraud_rate = 0.15;
  cfg.signal.features = {0, 1};
  cfg.signal.noise = 0.3;
  cfg.seed = 13;
  const auto ds = generate_synthetic(cfg);
  long frauds = 0;
  for (const auto& t : ds.transactions()) {
    frauds += t.label;
  }
  const auto interval = testsupport::binomial_acceptance(2000, 0.15, 0.01);
  CHECK(frauds >= interval.lo);
  CHECK(frauds <= interval.hi);
}

TEST_CASE("generate_synthetic: config validation") {
  SyntheticConfig cfg;
  cfg.n = 0;
  cfg.signal.features = {0};
  CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
  cfg.n = 10;
  cfg.fraud_rate = 1.0;
  CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
  cfg.fraud_rate = 0.15;
  cfg.signal.features = {};
  CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
  cfg.signal.features = {99};
  cfg.d = 4;
  CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
  cfg.signal.features = {0};
  cfg.signal.weights = {0.0};
  CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
}

TEST_CASE("make_arm_splits: four arms over 2000 transactions") {
  const auto ds = testsupport::random_dataset(2000, 4, 21);
  const std::vector<std::string> arms = {"a", "b", "c", "d"};
  const auto splits = make_arm_splits(ds, arms, 99);
  REQUIRE(splits.size() == 4);
  std::vector<std::string> all_validation;
  for (const auto& split : splits) {
    CHECK(split.train_ids.size() == 1000);
    CHECK(split.validation_ids.size() == 500);
    for (const auto& id : split.validation_ids) {
      CHECK(std::find(split.train_ids.begin(), split.train_ids.end(), id) ==
            split.train_ids.end());
    }
    all_validation.insert(all_validation.end(), split.validation_ids.begin(),
                          split.validation_ids.end());
  }
  // validation blocks partition 4 x 500 distinct transactions
  std::sort(all_validation.begin(), all_validation.end());
  CHECK(std::unique(all_validation.begin(), all_validation.end()) ==
        all_validation.end());
  CHECK(all_validation.size() == 2000);
}

TEST_CASE("make_arm_splits: one arm over 1500 takes the full remainder") {
  const auto ds = testsupport::random_dataset(1500, 3, 5);
  const std::vector<std::string> arms = {"only"};
  const auto splits = make_arm_splits(ds, arms, 3);
  REQUIRE(splits.size() == 1);
  CHECK(splits[0].validation_ids.size() == 500);
  CHECK(splits[0].train_ids.size() == 1000);
  std::vector<std::string> joined = splits[0].train_ids;
  joined.insert(joined.end(), splits[0].validation_ids.begin(),
                splits[0].validation_ids.end());
  std::sort(joined.begin(), joined.end());
  CHECK(std::unique(joined.begin(), joined.end()) == joined.end());
  CHECK(joined.size() == 1500);
}

TEST_CASE("make_arm_splits: errors and determinism") {
  const auto ds = testsupport::random_dataset(900, 3, 5);
  const std::vector<std::string> two = {"a", "b"};
  CHECK_THROWS_AS(
      make_arm_splits(ds, two, 1, SplitProtocol{1000, 500}),
      DataError);  // pool of 400 cannot give 1000 train rows
  const std::vector<std::string> three = {"a", "b", "c"};
  CHECK_THROWS_AS(make_arm_splits(ds, three, 1, SplitProtocol{100, 400}),
                  DataError);  // 3 x 400 validation > 900
  const std::vector<std::string> dup = {"a", "a"};
  CHECK_THROWS_AS(make_arm_splits(ds, dup, 1, SplitProtocol{100, 100}),
                  ConfigError);

  const auto s1 = make_arm_splits(ds, two, 42, SplitProtocol{300, 200});
  const auto s2 = make_arm_splits(ds, two, 42, SplitProtocol{300, 200});
  CHECK(s1[0].train_ids == s2[0].train_ids);
  CHECK(s1[1].validation_ids == s2[1].validation_ids);
  const auto s3 = make_arm_splits(ds, two, 43, SplitProtocol{300, 200});
  CHECK(s1[0].validation_ids != s3[0].validation_ids);
}

TEST_CASE("distribution_check: identical and disjoint samples") {
  const auto schema = FeatureSchema::numeric(1);
  std::vector<Transaction> rows;
  for (int i = 0; i < 6; ++i) {
    rows.push_back({"t" + std::to_string(i),
                    {i < 3 ? 0.0 : 1.0},
                    1.0,
                    0});
  }
  const Dataset ds(schema, rows);
  const std::vector<std::string> a = {"t0", "t1", "t2"};
  const std::vector<std::string> b = {"t3", "t4", "t5"};

  const auto same = distribution_check(a, a, ds);
  CHECK(same.max_ks == 0.0);

  const auto disjoint = distribution_check(a, b, ds);
  CHECK(disjoint.ks_by_feature[0] == 1.0);

  const std::vector<std::string> unknown = {"zz"};
  CHECK_THROWS_AS(distribution_check(a, unknown, ds), DataError);
  CHECK_THROWS_AS(distribution_check({}, b, ds), DataError);
}

TEST_CASE("distribution_check: seeded halves stay under the KS null "
          "threshold") {
  const auto ds = testsupport::random_dataset(1000, 8, 31);
  std::vector<std::string> a;
  std::vector<std::string> b;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    (i < 500 ? a : b).push_back(ds.transactions()[i].id);
  }
  const auto report = distribution_check(a, b, ds);
  const double threshold = testsupport::ks_null_threshold(500, 500, 0.001);
  CHECK(report.max_ks < threshold);
}

TEST_CASE("simulate_analyst: perfect and adversarial analysts") {
  const auto ds = testsupport::random_dataset(300, 3, 17);
  const auto perfect = simulate_analyst(ds, {0.0, 0.0, 0.0}, 1);
  for (const auto& t : ds.transactions()) {
    const auto d = perfect.decision_for(t.id);
    REQUIRE(d.has_value());
    CHECK(*d == (t.label == 1 ? AnalystDecision::declined
                              : AnalystDecision::approved));
  }
  const auto inverted = simulate_analyst(ds, {1.0, 1.0, 0.0}, 1);
  for (const auto& t : ds.transactions()) {
    CHECK(*inverted.decision_for(t.id) ==
          (t.label == 1 ? AnalystDecision::approved
                        : AnalystDecision::declined));
  }
  // suspicious only ever replaces a declined decision
  const auto suspicious = simulate_analyst(ds, {0.0, 0.0, 1.0}, 1);
  for (const auto& t : ds.transactions()) {
    CHECK(*suspicious.decision_for(t.id) ==
          (t.label == 1 ? AnalystDecision::suspicious
                        : AnalystDecision::approved));
  }
}

TEST_CASE("simulate_analyst: flip fraction within exact binomial 99% "
          "interval") {
  const auto ds = testsupport::random_dataset(500, 3, 23);
  const auto log = simulate_analyst(ds, {0.1, 0.1, 0.0}, 77);
  long flips = 0;
  for (const auto& t : ds.transactions()) {
    const bool declined = *log.decision_for(t.id) == AnalystDecision::declined;
    if (declined != (t.label == 1)) {
      ++flips;
    }
  }
  const auto interval = testsupport::binomial_acceptance(500, 0.1, 0.01);
  CHECK(flips >= interval.lo);
  CHECK(flips <= interval.hi);

  const auto log2 = simulate_analyst(ds, {0.1, 0.1, 0.0}, 77);
  for (const auto& t : ds.transactions()) {
    CHECK(*log.decision_for(t.id) == *log2.decision_for(t.id));
  }
  CHECK_THROWS_AS(simulate_analyst(ds, {1.5, 0.0, 0.0}, 1), ConfigError);
}

TEST_CASE("analyst log file round trip and validation") {
  TempDir dir;
  const auto ds = testsupport::random_dataset(20, 2, 3);
  const auto log = simulate_analyst(ds, {0.2, 0.1, 0.3}, 9);
  save_analyst_log(log, dir.file("log.csv"));
  const auto loaded = load_analyst_log(dir.file("log.csv"), ds);
  CHECK(loaded.size() == log.size());
  for (const auto& [id, decision] : log.entries()) {
    CHECK(*loaded.decision_for(id) == decision);
  }

  write_file(dir.file("bad.csv"), "id,decision\nzz,approved\n");
  CHECK(contains(error_message<DataError>(
                     [&] { load_analyst_log(dir.file("bad.csv"), ds); }),
                 "not in dataset"));
  write_file(dir.file("dup.csv"),
             "id,decision\n" + ds.transactions()[0].id + ",approved\n" +
                 ds.transactions()[0].id + ",declined\n");
  CHECK_THROWS_AS(load_analyst_log(dir.file("dup.csv"), ds), DataError);
  write_file(dir.file("decision.csv"),
             "id,decision\n" + ds.transactions()[0].id + ",maybe\n");
  CHECK_THROWS_AS(load_analyst_log(dir.file("decision.csv"), ds), DataError);
}

}  // TEST_SUITE
