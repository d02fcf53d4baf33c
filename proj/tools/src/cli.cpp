#include "simeval/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "simeval/manifest.hpp"
#include "simeval/config.hpp"
#include "simeval/engine.hpp"

namespace simeval::cli {

namespace {

namespace fs = std::filesystem;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  unsigned parallel = 1;
};

fs::path ensure_out_dir(const ExperimentConfig& cfg,
                        const CommonOptions& opts) {
  const fs::path dir = opts.out_dir ? fs::path(*opts.out_dir) : cfg.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw DataError(fmt::format("cannot create output directory '{}': {}",
                                dir.string(), ec.message()));
  }
  return dir;
}

ExperimentConfig load_config(const CommonOptions& opts) {
  ExperimentConfig cfg = load_experiment_config(opts.config_path);
  if (opts.seed) {
    cfg.master_seed = *opts.seed;
  }
  return cfg;
}

/// Removes files this invocation already wrote when a later stage fails.
class OutputTracker {
 public:
  void track(const fs::path& path) { written_.push_back(path); }

  void discard_all() {
    for (const auto& path : written_) {
      std::error_code ec;
      fs::remove(path, ec);
    }
    written_.clear();
  }

 private:
  std::vector<fs::path> written_;
};

int cmd_generate(const CommonOptions& opts, std::ostream& out) {
  ExperimentConfig cfg = load_config(opts);
  if (!cfg.data.synthetic) {
    throw ConfigError("generate requires [data] source = synthetic");
  }
  const fs::path dir = ensure_out_dir(cfg, opts);

  OutputTracker tracker;
  try {
    SyntheticConfig gen = cfg.data.generator;
    gen.seed = derive_seed(cfg.master_seed, "data");
    const Dataset dataset = generate_synthetic(gen);

    std::vector<ManifestArtifact> artifacts;
    const fs::path transactions = dir / "transactions.csv";
    save_transactions(dataset, transactions);
    tracker.track(transactions);
    artifacts.push_back({"transactions", transactions});

    if (cfg.data.analyst_source == "simulate") {
      const AnalystLog log = simulate_analyst(
          dataset, cfg.data.analyst_model, derive_seed(cfg.master_seed,
                                                       "analyst"));
      const fs::path log_path = dir / "analyst_log.csv";
      save_analyst_log(log, log_path);
      tracker.track(log_path);
      artifacts.push_back({"analyst_log", log_path});
    }

    const fs::path manifest =
        write_manifest(dir, "generate", cfg.master_seed, opts.config_path,
                       artifacts);
    tracker.track(manifest);

    out << fmt::format("wrote {} ({} transactions, d={})\n",
                       transactions.string(), dataset.size(), dataset.d());
    for (std::size_t i = 1; i < artifacts.size(); ++i) {
      out << fmt::format("wrote {}\n", artifacts[i].path.string());
    }
    out << fmt::format("wrote {}\n", manifest.string());
    return kExitOk;
  } catch (...) {
    tracker.discard_all();
    throw;
  }
}

int cmd_run(const CommonOptions& opts, const std::vector<std::string>& arms,
            std::ostream& out) {
  ExperimentConfig cfg = load_config(opts);
  if (!arms.empty()) {
    std::vector<ArmSpec> selected;
    for (const auto& name : arms) {
      const auto it = std::find_if(
          cfg.arms.begin(), cfg.arms.end(),
          [&](const ArmSpec& a) { return a.name == name; });
      if (it == cfg.arms.end()) {
        throw ConfigError(fmt::format("--arms: unknown arm '{}'", name));
      }
      selected.push_back(*it);
    }
    cfg.arms = std::move(selected);
  }
  const fs::path dir = ensure_out_dir(cfg, opts);

  OutputTracker tracker;
  try {
    ExperimentRun run = run_experiment(cfg, opts.parallel);

    std::vector<ManifestArtifact> artifacts;
    if (cfg.data.synthetic) {
      const fs::path transactions = dir / "transactions.csv";
      save_transactions(run.dataset, transactions);
      tracker.track(transactions);
      artifacts.push_back({"transactions", transactions});
    }
    if (run.analyst_log && cfg.data.analyst_source == "simulate") {
      const fs::path log_path = dir / "analyst_log.csv";
      save_analyst_log(*run.analyst_log, log_path);
      tracker.track(log_path);
      artifacts.push_back({"analyst_log", log_path});
    }
    const fs::path model_path = dir / "original_model.txt";
    save_model(run.original_model, model_path);
    tracker.track(model_path);
    artifacts.push_back({"original_model", model_path});

    for (const auto& set : run.explanation_sets) {
      const fs::path expl_path =
          dir / fmt::format("explanations_{}_k{}.csv", to_string(set.explainer),
                            set.k);
      save_explanations(set, expl_path);
      tracker.track(expl_path);
      artifacts.push_back({"explanations", expl_path});
    }

    const fs::path report_json = dir / "report.json";
    {
      std::ofstream file(report_json, std::ios::binary | std::ios::trunc);
      if (!file) {
        throw DataError(fmt::format("cannot write {}", report_json.string()));
      }
      file << report_to_json(run.report);
    }
    tracker.track(report_json);
    artifacts.push_back({"report", report_json});

    const std::string table = render_report_table(run.report);
    const std::string flags = render_report_flags(run.report);
    const fs::path report_txt = dir / "report.txt";
    {
      std::ofstream file(report_txt, std::ios::binary | std::ios::trunc);
      if (!file) {
        throw DataError(fmt::format("cannot write {}", report_txt.string()));
      }
      file << table << '\n' << flags;
    }
    tracker.track(report_txt);
    artifacts.push_back({"report_text", report_txt});

    const fs::path manifest = write_manifest(dir, "run", cfg.master_seed,
                                             opts.config_path, artifacts);
    tracker.track(manifest);

    out << table << '\n' << flags;
    out << fmt::format("\nwrote {}\n", report_json.string());
    return kExitOk;
  } catch (...) {
    tracker.discard_all();
    throw;
  }
}

int cmd_align(const CommonOptions& opts,
              const std::vector<std::string>& explanation_files,
              const std::string& sheets_path, const std::string& reasons_path,
              std::ostream& out) {
  const ExperimentConfig cfg = load_config(opts);
  const fs::path dir = ensure_out_dir(cfg, opts);
  const auto sheets = load_score_sheets(sheets_path);
  const auto reasons = load_transaction_reasons(reasons_path);

  struct Row {
    std::string explainer;
    AlignmentResult fraudulent;
    AlignmentResult legitimate;
  };
  std::vector<Row> rows;
  for (const auto& file : explanation_files) {
    const ExplanationSet set = load_explanations(file);
    Row row;
    row.explainer = std::string(to_string(set.explainer));
    for (const auto concept_class :
         {ConceptClass::fraudulent, ConceptClass::legitimate}) {
      const BootstrapParams bootstrap{
          cfg.bootstrap_b, cfg.alpha,
          derive_seed(cfg.master_seed,
                      fmt::format("align:{}:{}", row.explainer,
                                  to_string(concept_class)))};
      const AlignmentResult result = avg_feature_alignment(
          set, sheets, reasons, concept_class, bootstrap);
      if (concept_class == ConceptClass::fraudulent) {
        row.fraudulent = result;
      } else {
        row.legitimate = result;
      }
    }
    rows.push_back(std::move(row));
  }

  const int level = static_cast<int>(std::lround((1.0 - cfg.alpha) * 100.0));
  std::string table = fmt::format(
      "Average feature alignment (higher is better; parentheses contain {} "
      "percent pivotal bootstrap CIs)\n",
      level);
  table += fmt::format("{:<20} {:<24} {:<24}\n", "explainer",
                       "fraudulent concepts", "legitimate concepts");
  table += std::string(68, '-');
  table += '\n';
  const auto cell = [](const AlignmentResult& r) {
    return fmt::format("{:.2f} ({:.2f}, {:.2f})", r.avg_fa, r.ci.lo, r.ci.hi);
  };
  for (const auto& row : rows) {
    table += fmt::format("{:<20} {:<24} {:<24}\n", row.explainer,
                         cell(row.fraudulent), cell(row.legitimate));
  }
  out << table;

  nlohmann::ordered_json j;
  j["tool"] = nlohmann::ordered_json{
      {"name", std::string(kToolName)}, {"version", std::string(kToolVersion)}};
  j["alpha"] = cfg.alpha;
  j["bootstrap_b"] = cfg.bootstrap_b;
  auto list = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    const auto res_json = [](const AlignmentResult& r) {
      return nlohmann::ordered_json{{"avg_fa", r.avg_fa},
                                    {"ci_lo", r.ci.lo},
                                    {"ci_hi", r.ci.hi},
                                    {"n_transactions", r.n_transactions}};
    };
    list.push_back(nlohmann::ordered_json{{"explainer", row.explainer},
                                          {"fraudulent", res_json(row.fraudulent)},
                                          {"legitimate", res_json(row.legitimate)}});
  }
  j["explainers"] = std::move(list);
  const fs::path alignment_path = dir / "alignment.json";
  std::ofstream file(alignment_path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw DataError(fmt::format("cannot write {}", alignment_path.string()));
  }
  file << j.dump(2) << '\n';
  out << fmt::format("\nwrote {}\n", alignment_path.string());
  return kExitOk;
}

int cmd_report(const std::string& report_path, std::ostream& out) {
  std::ifstream in(report_path, std::ios::binary);
  if (!in) {
    throw DataError(fmt::format("cannot open report: {}", report_path));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  const ExperimentReport report = report_from_json(buf.str());
  out << render_report_table(report) << '\n' << render_report_flags(report);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"SimEval batch harness: proxy-model evaluation of "
               "feature-attribution methods for fraud decision support"};
  app.require_subcommand(1);

  CommonOptions generate_opts;
  CommonOptions run_opts;
  CommonOptions align_opts;
  std::vector<std::string> run_arms;
  std::vector<std::string> align_explanations;
  std::string align_sheets;
  std::string align_reasons;
  std::string report_path;

  const auto add_common = [](CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config (INI)")
        ->required();
    cmd->add_option("--seed", opts.seed, "override the config master seed");
    cmd->add_option("--out", opts.out_dir, "override the [output] dir");
    cmd->add_option("--parallel", opts.parallel,
                    "worker threads (default 1); output is identical to a "
                    "serial run");
  };

  auto* generate = app.add_subcommand(
      "generate", "write a synthetic transactions file (+ optional analyst "
                  "log) and manifest");
  add_common(generate, generate_opts);

  auto* run_cmd = app.add_subcommand(
      "run", "run the full multi-arm experiment and write reports");
  add_common(run_cmd, run_opts);
  run_cmd->add_option("--arms", run_arms,
                      "comma-separated arm names to run (default: all)")
      ->delimiter(',');

  auto* align = app.add_subcommand(
      "align", "score explanations against analyst score sheets (AVG FA)");
  add_common(align, align_opts);
  align
      ->add_option("--explanations", align_explanations,
                   "explanations file(s), one per explainer")
      ->required()
      ->delimiter(',');
  align->add_option("--sheets", align_sheets, "analyst score sheet file")
      ->required();
  align->add_option("--reasons", align_reasons, "transaction reasons file")
      ->required();

  auto* report = app.add_subcommand("report",
                                    "render a machine-readable report file");
  report->add_option("report", report_path, "report.json path")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (generate->parsed()) {
      return cmd_generate(generate_opts, out);
    }
    if (run_cmd->parsed()) {
      return cmd_run(run_opts, run_arms, out);
    }
    if (align->parsed()) {
      return cmd_align(align_opts, align_explanations, align_sheets,
                       align_reasons, out);
    }
    if (report->parsed()) {
      return cmd_report(report_path, out);
    }
    err << "no subcommand given\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ComputeError& e) {
    err << "computation error: " << e.what() << '\n';
    return kExitCompute;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace simeval::cli
