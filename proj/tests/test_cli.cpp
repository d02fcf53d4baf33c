#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "simeval/cli.hpp"
#include "simeval/config.hpp"
#include "simeval/engine.hpp"
#include "simeval/manifest.hpp"
#include "support/oracles.hpp"

using namespace simeval;
using testsupport::contains;
using testsupport::TempDir;

namespace {

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  file << text;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string tiny_run_config(const std::string& out_dir) {
  return R"([data]
seed = 777
n = 260
d = 6
fraud_rate = 0.25
noise = 0.1
signal_features = 0,1
historical_count = 120
train_size = 80
validation_size = 35

[original_model]
n_trees = 25
min_samples_leaf = 5

[arms.baseline]
kind = baseline
grid_families = random_forest
grid_min_samples_leaf = 5,15
grid_n_trees = 10

[arms.ti]
kind = full
explainer = tree_interpreter
grid_families = random_forest
grid_min_samples_leaf = 5,15
grid_n_trees = 10

[metrics]
bootstrap_b = 150
alpha = 0.10

[output]
dir = )" + out_dir + "\n";
}

ExperimentReport two_arm_report(double baseline_lo, double baseline_hi,
                                double arm_lo, double arm_hi) {
  ExperimentReport report;
  report.tool_version = "0.1.0";
  report.alpha = 0.10;
  report.bootstrap_b = 100;
  ArmResult baseline;
  baseline.name = "baseline";
  baseline.kind.id = ArmKindId::baseline_x_yhat;
  baseline.proxy.pdr = 0.5 * (baseline_lo + baseline_hi);
  baseline.proxy.ci = {baseline_lo, baseline_hi, 0.10, 100};
  baseline.original = baseline.proxy;
  ArmResult arm;
  arm.name = "ti";
  arm.kind.id = ArmKindId::full_x_yhat_e;
  arm.kind.explainer = ExplainerKind::tree_interpreter;
  arm.proxy.pdr = 0.5 * (arm_lo + arm_hi);
  arm.proxy.ci = {arm_lo, arm_hi, 0.10, 100};
  arm.original = baseline.original;
  report.arms = {baseline, arm};
  return report;
}

}  // namespace

TEST_SUITE("cli_harness") {

TEST_CASE("ini parser: sections, comments and errors with line numbers") {
  const auto ini = parse_ini("# comment\n[a]\nx = 1\n; note\ny = two words\n"
                             "[b.c]\nz=3\n");
  REQUIRE(ini.sections.size() == 2);
  CHECK(ini.sections[0].name == "a");
  CHECK(*ini.sections[0].find("y") == "two words");
  CHECK(*ini.sections[1].find("z") == "3");

  CHECK(contains(testsupport::error_message<ConfigError>(
                     [] { parse_ini("[a]\nx = 1\nx = 2\n"); }),
                 "line 3"));
  CHECK(contains(testsupport::error_message<ConfigError>(
                     [] { parse_ini("x = 1\n"); }),
                 "outside"));
  CHECK(contains(testsupport::error_message<ConfigError>(
                     [] { parse_ini("[a]\n[a]\n"); }),
                 "duplicate section"));
  CHECK_THROWS_AS(parse_ini("[a\n"), ConfigError);
  CHECK_THROWS_AS(parse_ini("[a]\nnot a pair\n"), ConfigError);
}

TEST_CASE("experiment config: unknown sections and keys are rejected") {
  CHECK(contains(testsupport::error_message<ConfigError>([] {
                   parse_experiment_config(
                       parse_ini("[data]\nseed = 1\n[mystery]\nx = 1\n"), "");
                 }),
                 "unknown config section"));
  CHECK(contains(
      testsupport::error_message<ConfigError>([] {
        parse_experiment_config(
            parse_ini("[data]\nseed = 1\ntypo_key = 2\n[arms.a]\nkind = "
                      "baseline\n"),
            "");
      }),
      "unknown key"));
  CHECK(contains(testsupport::error_message<ConfigError>([] {
                   parse_experiment_config(
                       parse_ini("[data]\nseed = 1\n[arms.a]\nkind = full\n"),
                       "");
                 }),
                 "requires an explainer"));
  CHECK(contains(testsupport::error_message<ConfigError>([] {
                   parse_experiment_config(parse_ini("[data]\nseed = 1\n"), "");
                 }),
                 "at least one [arms."));
}

TEST_CASE("generate: artifacts, verified digests and determinism") {
  TempDir dir;
  const auto out1 = dir.file("out1").string();
  const auto config = dir.file("gen.ini");
  write_file(config, R"([data]
seed = 31
n = 120
d = 5
fraud_rate = 0.2
signal_features = 0,1
analyst = simulate
historical_count = 50

[arms.a]
kind = baseline

[output]
dir = )" + out1 + "\n");

  const auto result = run_cli({"generate", "--config", config.string()});
  CHECK(result.code == cli::kExitOk);
  CHECK(std::filesystem::exists(dir.file("out1") / "transactions.csv"));
  CHECK(std::filesystem::exists(dir.file("out1") / "analyst_log.csv"));

  // manifest digests match the files on disk
  const auto manifest = nlohmann::json::parse(
      read_file(dir.file("out1") / "manifest.json"));
  CHECK(manifest.at("command") == "generate");
  for (const auto& artifact : manifest.at("artifacts")) {
    const auto path =
        dir.file("out1") / artifact.at("path").get<std::string>();
    CHECK(cli::sha256_file(path) == artifact.at("sha256").get<std::string>());
  }

  // identical seed, fresh directory: identical file digests
  const auto out2 = dir.file("out2").string();
  const auto rerun = run_cli(
      {"generate", "--config", config.string(), "--out", out2});
  CHECK(rerun.code == cli::kExitOk);
  CHECK(cli::sha256_file(dir.file("out1") / "transactions.csv") ==
        cli::sha256_file(dir.file("out2") / "transactions.csv"));
  CHECK(cli::sha256_file(dir.file("out1") / "analyst_log.csv") ==
        cli::sha256_file(dir.file("out2") / "analyst_log.csv"));

  // a nested, not-yet-existing output directory is created
  const auto nested = (dir.file("deep") / "er" / "dir").string();
  CHECK(run_cli({"generate", "--config", config.string(), "--out", nested})
            .code == cli::kExitOk);
  CHECK(std::filesystem::exists(std::filesystem::path(nested) /
                                "transactions.csv"));

  // invalid config: nonzero exit, message on the error stream
  const auto bad_config = dir.file("bad.ini");
  write_file(bad_config, "[data]\nseed = 1\nn = 0\n[arms.a]\nkind = baseline\n");
  const auto bad = run_cli({"generate", "--config", bad_config.string(),
                            "--out", dir.file("bad_out").string()});
  CHECK(bad.code == cli::kExitConfig);
  CHECK(bad.out.empty());
  CHECK(contains(bad.err, "config error"));
}

TEST_CASE("run: reports, reruns, arm filter and failure cleanup") {
  TempDir dir;
  const auto config = dir.file("run.ini");
  write_file(config, tiny_run_config(dir.file("out").string()));

  const auto result = run_cli({"run", "--config", config.string()});
  CHECK(result.code == cli::kExitOk);
  CHECK(contains(result.out, "simeval"));
  const auto report_path = dir.file("out") / "report.json";
  REQUIRE(std::filesystem::exists(report_path));
  const std::string first = read_file(report_path);

  // byte-identical rerun into a fresh directory, parallel 4
  const auto rerun =
      run_cli({"run", "--config", config.string(), "--out",
               dir.file("out_rerun").string(), "--parallel", "4"});
  CHECK(rerun.code == cli::kExitOk);
  CHECK(read_file(dir.file("out_rerun") / "report.json") == first);

  // --arms filter restricts the table to one row
  const auto filtered =
      run_cli({"run", "--config", config.string(), "--out",
               dir.file("out_one").string(), "--arms", "baseline"});
  CHECK(filtered.code == cli::kExitOk);
  const auto one = nlohmann::json::parse(
      read_file(dir.file("out_one") / "report.json"));
  CHECK(one.at("arms").size() == 1);

  const auto unknown =
      run_cli({"run", "--config", config.string(), "--arms", "nope"});
  CHECK(unknown.code == cli::kExitConfig);

  // stage failure: nothing is left behind in the output directory
  auto broken_text = tiny_run_config(dir.file("broken_out").string());
  broken_text += "\n[arms.bad]\nkind = full\nexplainer = tree_shap\nk = 99\n";
  const auto broken_config = dir.file("broken.ini");
  write_file(broken_config, broken_text);
  const auto broken = run_cli({"run", "--config", broken_config.string()});
  CHECK(broken.code == cli::kExitConfig);
  CHECK(contains(broken.err, "arm 'bad'"));
  if (std::filesystem::exists(dir.file("broken_out"))) {
    CHECK(std::filesystem::is_empty(dir.file("broken_out")));
  }

  // file-mode run: evaluate the transactions the earlier run wrote
  const auto file_config = dir.file("file_mode.ini");
  write_file(file_config, R"([data]
seed = 99
source = file
transactions = )" + (dir.file("out") / "transactions.csv").string() + R"(
historical_count = 120
train_size = 80
validation_size = 35

[original_model]
n_trees = 20
min_samples_leaf = 5

[arms.baseline]
kind = baseline
grid_families = random_forest
grid_min_samples_leaf = 5
grid_n_trees = 10

[metrics]
bootstrap_b = 150

[output]
dir = )" + dir.file("file_out").string() + "\n");
  const auto file_mode = run_cli({"run", "--config", file_config.string()});
  CHECK(file_mode.code == cli::kExitOk);
  CHECK(std::filesystem::exists(dir.file("file_out") / "report.json"));
  // file mode rewrites no transactions artifact
  CHECK_FALSE(std::filesystem::exists(dir.file("file_out") /
                                      "transactions.csv"));

  // missing transactions file is a data error
  const auto missing_config = dir.file("missing.ini");
  write_file(missing_config, R"([data]
seed = 1
source = file
transactions = /nonexistent/file.csv

[arms.a]
kind = baseline

[output]
dir = )" + dir.file("missing_out").string() + "\n");
  CHECK(run_cli({"run", "--config", missing_config.string()}).code ==
        cli::kExitData);
}

TEST_CASE("align: hand case end to end, formats and failure modes") {
  TempDir dir;
  const auto config = dir.file("align.ini");
  write_file(config, R"([data]
seed = 5

[arms.a]
kind = baseline

[metrics]
bootstrap_b = 150
alpha = 0.10

[output]
dir = )" + dir.file("out").string() + "\n");

  // explanations: two transactions, two nonzero features each
  ExplanationSet set;
  set.explainer = ExplainerKind::tree_shap;
  set.d = 4;
  set.k = 2;
  Explanation e;
  e.d = 4;
  e.k = 2;
  e.explainer = ExplainerKind::tree_shap;
  e.entries = {{0, 0.5}, {1, -0.5}};
  set.add("t1", e);
  set.add("t2", e);
  save_explanations(set, dir.file("expl.csv"));

  write_file(dir.file("sheets.csv"),
             "analyst_id,feature_index,reason_id,concept_class,score\n"
             "a1,0,r1,fraudulent,4\n"
             "a1,1,r1,fraudulent,2\n"
             "a1,0,r2,fraudulent,2\n"
             "a1,1,r2,fraudulent,0\n"
             "a1,0,l1,legitimate,1\n"
             "a1,1,l1,legitimate,1\n");
  write_file(dir.file("reasons.csv"),
             "transaction_id,reason_id\n"
             "t1,r1\n"
             "t1,l1\n"
             "t2,r2\n"
             "t2,l1\n");

  const auto result = run_cli({"align", "--config", config.string(),
                               "--explanations", dir.file("expl.csv").string(),
                               "--sheets", dir.file("sheets.csv").string(),
                               "--reasons", dir.file("reasons.csv").string()});
  CHECK(result.code == cli::kExitOk);
  // hand case: fraudulent concepts average (3 + 1) / 2 = 2.00
  CHECK(contains(result.out, "2.00 ("));
  CHECK(contains(result.out, "1.00 ("));  // legitimate concepts: all ones
  CHECK(contains(result.out, "tree_shap"));
  CHECK(std::filesystem::exists(dir.file("out") / "alignment.json"));

  // all-zero sheets give zero alignment in both columns
  write_file(dir.file("sheets_zero.csv"),
             "analyst_id,feature_index,reason_id,concept_class,score\n"
             "a1,0,r1,fraudulent,0\n"
             "a1,1,r1,fraudulent,0\n"
             "a1,0,r2,fraudulent,0\n"
             "a1,1,r2,fraudulent,0\n"
             "a1,0,l1,legitimate,0\n"
             "a1,1,l1,legitimate,0\n");
  const auto zeros = run_cli({"align", "--config", config.string(),
                              "--explanations", dir.file("expl.csv").string(),
                              "--sheets", dir.file("sheets_zero.csv").string(),
                              "--reasons", dir.file("reasons.csv").string()});
  CHECK(zeros.code == cli::kExitOk);
  CHECK(contains(zeros.out, "0.00 (0.00, 0.00)"));

  // inconsistent ids: name the first offender, exit with the data code
  write_file(dir.file("reasons_missing.csv"),
             "transaction_id,reason_id\nt1,r1\n");
  const auto missing = run_cli(
      {"align", "--config", config.string(), "--explanations",
       dir.file("expl.csv").string(), "--sheets",
       dir.file("sheets.csv").string(), "--reasons",
       dir.file("reasons_missing.csv").string()});
  CHECK(missing.code == cli::kExitData);
  CHECK(contains(missing.err, "t2"));

  // a class with no reasons anywhere is an undefined metric
  write_file(dir.file("sheets_fraud_only.csv"),
             "analyst_id,feature_index,reason_id,concept_class,score\n"
             "a1,0,r1,fraudulent,4\n"
             "a1,1,r1,fraudulent,2\n"
             "a1,0,r2,fraudulent,2\n"
             "a1,1,r2,fraudulent,0\n");
  write_file(dir.file("reasons_fraud_only.csv"),
             "transaction_id,reason_id\nt1,r1\nt2,r2\n");
  const auto undefined = run_cli(
      {"align", "--config", config.string(), "--explanations",
       dir.file("expl.csv").string(), "--sheets",
       dir.file("sheets_fraud_only.csv").string(), "--reasons",
       dir.file("reasons_fraud_only.csv").string()});
  CHECK(undefined.code == cli::kExitCompute);
}

TEST_CASE("report: overlap flags, candidates and error handling") {
  TempDir dir;

  // all CIs overlap: the null-result shape
  const auto overlapping = two_arm_report(0.08, 0.15, 0.06, 0.12);
  write_file(dir.file("overlap.json"), report_to_json(overlapping));
  const auto null_shape =
      run_cli({"report", dir.file("overlap.json").string()});
  CHECK(null_shape.code == cli::kExitOk);
  CHECK(contains(null_shape.out, "no explainer separates from baseline"));

  // a negative stored lower bound is clamped to zero in the rendering only
  const auto negative_lo = two_arm_report(0.08, 0.15, -0.02, 0.12);
  const std::string negative_json = report_to_json(negative_lo);
  CHECK(contains(negative_json, "-0.02"));  // stored CI stays unclamped
  write_file(dir.file("negative.json"), negative_json);
  const auto clamped = run_cli({"report", dir.file("negative.json").string()});
  CHECK(clamped.code == cli::kExitOk);
  CHECK(contains(clamped.out, "(0.000, 0.120)"));

  // a separated lower arm is named as a candidate
  const auto separated = two_arm_report(0.20, 0.30, 0.05, 0.10);
  write_file(dir.file("separated.json"), report_to_json(separated));
  const auto candidate =
      run_cli({"report", dir.file("separated.json").string()});
  CHECK(candidate.code == cli::kExitOk);
  CHECK(contains(candidate.out, "candidate"));
  CHECK(contains(candidate.out, "'ti'"));

  // empty arm list is an error
  ExperimentReport empty;
  empty.tool_version = "0.1.0";
  write_file(dir.file("empty.json"), report_to_json(empty));
  CHECK(run_cli({"report", dir.file("empty.json").string()}).code ==
        cli::kExitData);

  // unreadable report
  write_file(dir.file("garbage.json"), "not json at all");
  CHECK(run_cli({"report", dir.file("garbage.json").string()}).code ==
        cli::kExitData);
  CHECK(run_cli({"report", dir.file("nope.json").string()}).code ==
        cli::kExitData);
}

TEST_CASE("usage errors and help") {
  CHECK(run_cli({}).code == cli::kExitConfig);
  CHECK(run_cli({"frobnicate"}).code == cli::kExitConfig);
  CHECK(run_cli({"run"}).code == cli::kExitConfig);  // missing --config
  const auto help = run_cli({"--help"});
  CHECK(help.code == cli::kExitOk);
  CHECK(contains(help.out, "generate"));
  CHECK(contains(help.out, "report"));
}

}  // TEST_SUITE
