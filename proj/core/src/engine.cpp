#include "simeval/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

namespace simeval {

namespace {

using ordered_json = nlohmann::ordered_json;

// Rethrows stage failures with the stage (and arm) named, preserving the
// error category so exit codes stay meaningful.
template <typename Fn>
auto stage_guard(std::string_view stage, std::string_view arm, Fn&& fn) {
  const auto context = [&](const char* what) {
    return arm.empty()
               ? fmt::format("stage '{}': {}", stage, what)
               : fmt::format("stage '{}' (arm '{}'): {}", stage, arm, what);
  };
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(context(e.what()));
  } catch (const DataError& e) {
    throw DataError(context(e.what()));
  } catch (const ComputeError& e) {
    throw ComputeError(context(e.what()));
  } catch (const Error& e) {
    throw ComputeError(context(e.what()));
  }
}

/// Index-parallel loop; the failure with the lowest index wins, so errors are
/// deterministic under any scheduling.
void parallel_for(std::size_t n, unsigned parallelism,
                  const std::function<void(std::size_t)>& body) {
  if (parallelism <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      body(i);
    }
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const unsigned n_workers =
      std::min<unsigned>(parallelism, static_cast<unsigned>(n));
  std::vector<std::thread> workers;
  workers.reserve(n_workers);
  for (unsigned w = 0; w < n_workers; ++w) {
    workers.emplace_back([&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) {
          return;
        }
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) {
    w.join();
  }
  for (const auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
}

std::vector<double> predict_rows(const Model& model, const Matrix& rows) {
  std::vector<double> out(rows.rows());
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    out[i] = predict_proba(model, rows.row(i));
  }
  return out;
}

std::vector<std::uint8_t> decline_flags(std::span<const double> probabilities,
                                        double threshold) {
  std::vector<std::uint8_t> out(probabilities.size());
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    out[i] = probabilities[i] > threshold ? 1 : 0;
  }
  return out;
}

PdrResult pdr_with_ci(std::span<const std::uint8_t> decline,
                      std::span<const int> labels,
                      std::span<const double> amounts,
                      const BootstrapParams& bootstrap,
                      const PdrParams& params) {
  PdrResult result;
  result.pdr = pdr(decline, labels, amounts, params);
  const auto statistic = [&](std::span<const std::size_t> idx) {
    std::vector<std::uint8_t> d(idx.size());
    std::vector<int> l(idx.size());
    std::vector<double> a(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      d[i] = decline[idx[i]];
      l[i] = labels[idx[i]];
      a[i] = amounts[idx[i]];
    }
    return pdr(d, l, a, params);
  };
  result.ci = bootstrap_pivotal_ci(statistic, decline.size(), bootstrap);
  return result;
}

GridSpec build_grid(const ArmSpec& spec, std::uint64_t grid_seed) {
  GridSpec grid;
  std::size_t idx = 0;
  for (const auto family : spec.grid_families) {
    for (const auto msl : spec.grid_min_samples_leaf) {
      Hyperparams hp;
      hp.family = family;
      hp.min_samples_leaf = msl;
      hp.n_trees = spec.grid_n_trees;
      hp.seed = derive_seed(grid_seed, "candidate", idx);
      grid.candidates.push_back(hp);
      ++idx;
    }
  }
  return grid;
}

std::size_t effective_trees(const Hyperparams& hp) {
  return hp.family == ModelFamily::decision_tree ? 1 : hp.n_trees;
}

}  // namespace

// -- assembly ---------------------------------------------------------------------

AssembledInputs assemble_inputs(const ArmKind& kind, const Dataset& dataset,
                                std::span<const std::string> ids,
                                const Model& original_model,
                                const ExplanationSet* explanations) {
  const std::size_t d = dataset.d();
  if (model_n_features(original_model) != d) {
    throw ComputeError(fmt::format(
        "assembly error: original model expects {} features, dataset has {}",
        model_n_features(original_model), d));
  }
  if (kind.includes_explanation() && explanations == nullptr) {
    throw ConfigError("assembly error: arm kind requires explanations");
  }

  AssembledInputs out;
  if (kind.includes_x()) {
    for (const auto& f : dataset.schema().features()) {
      out.layout.push_back(fmt::format("x:{}", f.name));
    }
  }
  out.layout.emplace_back("yhat");
  if (kind.includes_explanation()) {
    for (const auto& f : dataset.schema().features()) {
      out.layout.push_back(fmt::format("e:{}", f.name));
    }
  }

  out.x = Matrix(ids.size(), out.layout.size());
  out.ids.assign(ids.begin(), ids.end());
  out.labels.resize(ids.size());
  out.amounts.resize(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Transaction& t = dataset.by_id(ids[i]);
    out.labels[i] = t.label;
    out.amounts[i] = t.amount;
    auto row = out.x.row(i);
    std::size_t col = 0;
    if (kind.includes_x()) {
      for (std::size_t j = 0; j < d; ++j) {
        row[col++] = t.features[j];
      }
    }
    row[col++] = predict_proba(original_model, t.features);
    if (kind.includes_explanation()) {
      const Explanation* e = explanations->find(ids[i]);
      if (e == nullptr) {
        throw DataError(fmt::format(
            "assembly error: missing explanation for id '{}'", ids[i]));
      }
      for (const auto& [feature, value] : e->entries) {
        if (feature >= d) {
          throw DataError(fmt::format(
              "assembly error: explanation index {} outside d={}", feature,
              d));
        }
        row[col + feature] = value;
      }
      col += d;
    }
  }
  return out;
}

// -- thresholding -------------------------------------------------------------------

double select_threshold_min_pdr(std::span<const double> probabilities,
                                std::span<const int> labels,
                                std::span<const double> amounts,
                                const PdrParams& params) {
  if (probabilities.empty()) {
    throw ComputeError("threshold selection: empty sample");
  }
  std::vector<double> sorted(probabilities.begin(), probabilities.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  std::vector<double> candidates;
  candidates.push_back(0.0);
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    candidates.push_back(0.5 * (sorted[i] + sorted[i + 1]));
  }
  candidates.push_back(1.0);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());

  double best_threshold = candidates.front();
  double best_pdr = std::numeric_limits<double>::infinity();
  std::vector<std::uint8_t> decline(probabilities.size());
  for (const double threshold : candidates) {
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
      decline[i] = probabilities[i] > threshold ? 1 : 0;
    }
    const double p = pdr(decline, labels, amounts, params);
    if (p < best_pdr) {
      best_pdr = p;
      best_threshold = threshold;
    }
  }
  return best_threshold;
}

// -- proxy training -------------------------------------------------------------------

TrainProxyResult train_proxy(const ArmRuntimeConfig& arm,
                             const AssembledInputs& train,
                             const AssembledInputs& validation) {
  if (train.x.rows() == 0 || validation.x.rows() == 0) {
    throw ComputeError("train_proxy: empty train or validation split");
  }
  TrainingSet ts{train.x, train.labels, train.ids};
  const auto objective = [&](const Model& m) {
    const auto train_probs = predict_rows(m, train.x);
    const double threshold = select_threshold_min_pdr(
        train_probs, train.labels, train.amounts, arm.pdr);
    const auto val_probs = predict_rows(m, validation.x);
    const auto decline = decline_flags(val_probs, threshold);
    return pdr(decline, validation.labels, validation.amounts, arm.pdr);
  };
  auto grid = grid_search(ts, arm.grid, objective, arm.parallelism);

  // Same hyperparameters incl. seed: the refit reproduces the grid's winner.
  Model final_model = fit_model(ts, grid.best);
  const auto train_probs = predict_rows(final_model, train.x);
  const double threshold = select_threshold_min_pdr(
      train_probs, train.labels, train.amounts, arm.pdr);

  TrainProxyResult result;
  result.proxy = ProxyModel{std::move(final_model), threshold, train.layout};
  result.chosen = grid.best;
  result.grid_table = std::move(grid.table);
  return result;
}

PdrResult evaluate_arm(const ProxyModel& proxy,
                       const AssembledInputs& validation,
                       const BootstrapParams& bootstrap,
                       const PdrParams& params) {
  if (validation.x.rows() == 0) {
    throw ComputeError("evaluate_arm: empty validation split");
  }
  const auto probs = predict_rows(proxy.model, validation.x);
  const auto decline = decline_flags(probs, proxy.threshold);
  return pdr_with_ci(decline, validation.labels, validation.amounts, bootstrap,
                     params);
}

ParrotingDiagnostic parroting_diagnostic(
    std::span<const std::uint8_t> original_decline,
    std::span<const std::uint8_t> proxy_decline, std::span<const int> labels,
    std::span<const double> amounts, const BootstrapParams& bootstrap,
    const PdrParams& params) {
  if (original_decline.size() != proxy_decline.size() ||
      original_decline.empty()) {
    throw ComputeError("parroting_diagnostic: misaligned decision vectors");
  }
  ParrotingDiagnostic diag;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < original_decline.size(); ++i) {
    agree += (original_decline[i] != 0) == (proxy_decline[i] != 0) ? 1 : 0;
  }
  diag.agreement_rate = static_cast<double>(agree) /
                        static_cast<double>(original_decline.size());
  diag.flagged = diag.agreement_rate == 1.0;

  BootstrapParams original_params = bootstrap;
  original_params.seed = derive_seed(bootstrap.seed, "original");
  BootstrapParams proxy_params = bootstrap;
  proxy_params.seed = derive_seed(bootstrap.seed, "proxy");
  diag.original =
      pdr_with_ci(original_decline, labels, amounts, original_params, params);
  diag.proxy = pdr_with_ci(proxy_decline, labels, amounts, proxy_params, params);
  return diag;
}

// -- full experiment --------------------------------------------------------------------

namespace {

struct ArmWork {
  ArmSpec spec;
  ArmSplit split;
  AssembledInputs train;
  AssembledInputs validation;
  GridSpec grid;
  std::vector<GridEntry> table;
  std::size_t chosen_index = 0;
  const ExplanationSet* explanations = nullptr;
};

std::size_t pick_best_index(std::span<const Hyperparams> candidates,
                            std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const auto& a = candidates[i];
    const auto& b = candidates[best];
    const bool better =
        scores[i] < scores[best] ||
        (scores[i] == scores[best] &&
         (effective_trees(a) < effective_trees(b) ||
          (effective_trees(a) == effective_trees(b) &&
           a.min_samples_leaf < b.min_samples_leaf)));
    if (better) {
      best = i;
    }
  }
  return best;
}

}  // namespace

ExperimentRun run_experiment(const ExperimentConfig& cfg,
                             unsigned parallelism) {
  if (parallelism == 0) {
    parallelism = 1;
  }
  const std::uint64_t master = cfg.master_seed;

  // data
  Dataset dataset = stage_guard("data", "", [&] {
    if (cfg.data.synthetic) {
      SyntheticConfig gen = cfg.data.generator;
      gen.seed = derive_seed(master, "data");
      return generate_synthetic(gen);
    }
    return load_transactions(cfg.data.transactions_path);
  });
  const std::size_t hist_n = cfg.data.historical_count;
  stage_guard("data", "", [&] {
    if (hist_n == 0 || hist_n >= dataset.size()) {
      throw ConfigError(fmt::format(
          "historical_count must be in [1, {}), got {}", dataset.size(),
          hist_n));
    }
  });
  const Dataset historical = dataset.slice(0, hist_n);
  const Dataset experiment = dataset.slice(hist_n, dataset.size());

  // analyst log
  std::optional<AnalystLog> analyst_log;
  stage_guard("analyst", "", [&] {
    if (cfg.data.analyst_source == "simulate") {
      analyst_log = simulate_analyst(dataset, cfg.data.analyst_model,
                                     derive_seed(master, "analyst"));
    } else if (cfg.data.analyst_source == "file") {
      analyst_log = load_analyst_log(cfg.data.analyst_log_path, dataset);
    }
  });

  // original model
  Model original_model = stage_guard("original-model", "", [&] {
    TrainingSet ts;
    ts.x = Matrix(historical.size(), historical.d());
    ts.labels.resize(historical.size());
    ts.ids.resize(historical.size());
    for (std::size_t i = 0; i < historical.size(); ++i) {
      const auto& t = historical.transactions()[i];
      std::copy(t.features.begin(), t.features.end(), ts.x.row(i).begin());
      ts.labels[i] = t.label;
      ts.ids[i] = t.id;
    }
    Hyperparams hp = cfg.original_model;
    hp.seed = derive_seed(master, "original-model");
    return fit_model(ts, hp);
  });

  // explanations, one attribution pass per distinct explainer
  std::vector<ExplainerKind> explainer_order;
  for (const auto& arm : cfg.arms) {
    if (arm.kind.explainer &&
        std::find(explainer_order.begin(), explainer_order.end(),
                  *arm.kind.explainer) == explainer_order.end()) {
      explainer_order.push_back(*arm.kind.explainer);
    }
  }

  const TrainStats lime_stats = explainer_order.empty()
                                    ? TrainStats{}
                                    : TrainStats::from(historical);
  std::map<ExplainerKind, std::vector<Attribution>> attribution_cache;
  for (const auto explainer : explainer_order) {
    const std::string arm_context = [&] {
      for (const auto& arm : cfg.arms) {
        if (arm.kind.explainer == explainer) {
          return arm.name;
        }
      }
      return std::string();
    }();
    stage_guard("explanations", arm_context, [&] {
      std::vector<Attribution> attrs(experiment.size());
      parallel_for(experiment.size(), parallelism, [&](std::size_t i) {
        const auto& t = experiment.transactions()[i];
        switch (explainer) {
          case ExplainerKind::tree_interpreter:
            attrs[i] = tree_interpreter(original_model, t.features);
            break;
          case ExplainerKind::tree_shap:
            attrs[i] = tree_shap(original_model, t.features);
            break;
          case ExplainerKind::lime: {
            LimeConfig lime_cfg = cfg.lime;
            lime_cfg.seed = derive_seed(master, fmt::format("lime:{}", t.id));
            attrs[i] = lime_explain(
                [&](std::span<const double> x) {
                  return predict_proba(original_model, x);
                },
                t.features, lime_stats, lime_cfg);
            break;
          }
        }
      });
      attribution_cache.emplace(explainer, std::move(attrs));
    });
  }

  // sparsified explanation sets per (explainer, k)
  std::vector<ExplanationSet> explanation_sets;
  std::map<std::pair<int, std::size_t>, std::size_t> set_index;
  for (const auto& arm : cfg.arms) {
    if (!arm.kind.explainer) {
      continue;
    }
    const auto key = std::make_pair(static_cast<int>(*arm.kind.explainer),
                                    arm.k);
    if (set_index.contains(key)) {
      continue;
    }
    stage_guard("explanations", arm.name, [&] {
      ExplanationSet set;
      set.explainer = *arm.kind.explainer;
      set.d = experiment.d();
      set.k = arm.k;
      const auto& attrs = attribution_cache.at(*arm.kind.explainer);
      for (std::size_t i = 0; i < experiment.size(); ++i) {
        Explanation e = sparsify_topk(attrs[i], arm.k);
        set.add(experiment.transactions()[i].id, std::move(e));
      }
      set_index.emplace(key, explanation_sets.size());
      explanation_sets.push_back(std::move(set));
    });
  }

  // splits
  std::vector<std::string> arm_names;
  arm_names.reserve(cfg.arms.size());
  for (const auto& arm : cfg.arms) {
    arm_names.push_back(arm.name);
  }
  const SplitProtocol protocol{cfg.data.train_size, cfg.data.validation_size};
  const auto splits = stage_guard("splits", "", [&] {
    return make_arm_splits(experiment, arm_names, derive_seed(master, "splits"),
                           protocol);
  });

  // per-arm assembly and grid tables
  std::vector<ArmWork> work(cfg.arms.size());
  const unsigned grid_parallelism = cfg.arms.size() == 1 ? parallelism : 1;
  parallel_for(cfg.arms.size(), parallelism, [&](std::size_t a) {
    stage_guard("grid-search", cfg.arms[a].name, [&] {
      ArmWork& w = work[a];
      w.spec = cfg.arms[a];
      w.split = splits[a];
      if (w.spec.kind.explainer) {
        const auto key = std::make_pair(
            static_cast<int>(*w.spec.kind.explainer), w.spec.k);
        w.explanations = &explanation_sets[set_index.at(key)];
      }
      w.train = assemble_inputs(w.spec.kind, experiment, w.split.train_ids,
                                original_model, w.explanations);
      w.validation = assemble_inputs(w.spec.kind, experiment,
                                     w.split.validation_ids, original_model,
                                     w.explanations);
      w.grid = build_grid(w.spec,
                          derive_seed(master, fmt::format("grid:{}", w.spec.name)));

      ArmRuntimeConfig runtime;
      runtime.name = w.spec.name;
      runtime.kind = w.spec.kind;
      runtime.grid = w.grid;
      runtime.k = w.spec.k;
      runtime.pdr = cfg.pdr;
      runtime.parallelism = grid_parallelism;
      TrainingSet ts{w.train.x, w.train.labels, w.train.ids};
      const auto objective = [&](const Model& m) {
        const auto train_probs = predict_rows(m, w.train.x);
        const double threshold = select_threshold_min_pdr(
            train_probs, w.train.labels, w.train.amounts, cfg.pdr);
        const auto val_probs = predict_rows(m, w.validation.x);
        const auto decline = decline_flags(val_probs, threshold);
        return pdr(decline, w.validation.labels, w.validation.amounts,
                   cfg.pdr);
      };
      auto grid_result = grid_search(ts, w.grid, objective, grid_parallelism);
      w.table = std::move(grid_result.table);
    });
  });

  // hyperparameter choice
  stage_guard("selection", "", [&] {
    if (cfg.selection == HyperparamSelection::per_arm) {
      for (auto& w : work) {
        std::vector<Hyperparams> candidates;
        std::vector<double> scores;
        for (const auto& entry : w.table) {
          candidates.push_back(entry.hp);
          scores.push_back(entry.validation_pdr);
        }
        w.chosen_index = pick_best_index(candidates, scores);
      }
      return;
    }
    // global: identical grid axes required; argmin of the mean PDR
    const auto& first = work.front();
    for (const auto& w : work) {
      if (w.table.size() != first.table.size()) {
        throw ConfigError(
            "global hyperparameter selection requires identical grids across "
            "arms (use hyperparam_selection = per_arm for per-arm grids)");
      }
      for (std::size_t i = 0; i < w.table.size(); ++i) {
        const auto& a = w.table[i].hp;
        const auto& b = first.table[i].hp;
        if (a.family != b.family ||
            a.min_samples_leaf != b.min_samples_leaf ||
            a.n_trees != b.n_trees) {
          throw ConfigError(
              "global hyperparameter selection requires identical grids "
              "across arms (use hyperparam_selection = per_arm)");
        }
      }
    }
    std::vector<Hyperparams> candidates;
    std::vector<double> mean_scores(first.table.size(), 0.0);
    for (std::size_t i = 0; i < first.table.size(); ++i) {
      candidates.push_back(first.table[i].hp);
      for (const auto& w : work) {
        mean_scores[i] += w.table[i].validation_pdr;
      }
      mean_scores[i] /= static_cast<double>(work.size());
    }
    const std::size_t best = pick_best_index(candidates, mean_scores);
    for (auto& w : work) {
      w.chosen_index = best;
    }
  });

  // final per-arm fits and evaluations
  std::vector<ArmResult> results(work.size());
  parallel_for(work.size(), parallelism, [&](std::size_t a) {
    stage_guard("evaluate", work[a].spec.name, [&] {
      ArmWork& w = work[a];
      const Hyperparams chosen = w.grid.candidates[w.chosen_index];

      TrainingSet ts{w.train.x, w.train.labels, w.train.ids};
      Model proxy_model = fit_model(ts, chosen);
      const auto train_probs = predict_rows(proxy_model, w.train.x);
      const double threshold = select_threshold_min_pdr(
          train_probs, w.train.labels, w.train.amounts, cfg.pdr);

      // original-model threshold from the same train split
      std::vector<double> train_yhat(w.split.train_ids.size());
      for (std::size_t i = 0; i < w.split.train_ids.size(); ++i) {
        train_yhat[i] = predict_proba(
            original_model, experiment.by_id(w.split.train_ids[i]).features);
      }
      const double original_threshold = select_threshold_min_pdr(
          train_yhat, w.train.labels, w.train.amounts, cfg.pdr);

      const auto val_probs = predict_rows(proxy_model, w.validation.x);
      const auto proxy_decline = decline_flags(val_probs, threshold);
      std::vector<double> val_yhat(w.split.validation_ids.size());
      for (std::size_t i = 0; i < w.split.validation_ids.size(); ++i) {
        val_yhat[i] = predict_proba(
            original_model,
            experiment.by_id(w.split.validation_ids[i]).features);
      }
      const auto original_decline = decline_flags(val_yhat, original_threshold);

      BootstrapParams bootstrap{cfg.bootstrap_b, cfg.alpha,
                                derive_seed(master, fmt::format("bootstrap:{}",
                                                                w.spec.name))};
      const ParrotingDiagnostic diag = parroting_diagnostic(
          original_decline, proxy_decline, w.validation.labels,
          w.validation.amounts, bootstrap, cfg.pdr);

      ArmResult& r = results[a];
      r.name = w.spec.name;
      r.kind = w.spec.kind;
      r.k = w.spec.k;
      r.input_width = w.train.x.cols();
      r.chosen = chosen;
      r.grid_table = w.table;
      r.threshold = threshold;
      r.original_threshold = original_threshold;
      r.proxy = diag.proxy;
      r.original = diag.original;
      r.agreement_rate = diag.agreement_rate;
      r.parroting_flagged = diag.flagged;
      r.split_max_ks =
          distribution_check(w.split.train_ids, w.split.validation_ids,
                             experiment)
              .max_ks;

      if (w.explanations != nullptr) {
        std::vector<Explanation> validation_explanations;
        validation_explanations.reserve(w.split.validation_ids.size());
        for (const auto& id : w.split.validation_ids) {
          const auto* e = w.explanations->find(id);
          if (e == nullptr) {
            throw DataError(
                fmt::format("missing explanation for id '{}'", id));
          }
          validation_explanations.push_back(*e);
        }
        const auto stats =
            repetitiveness_stats(validation_explanations, experiment.d());
        r.repetitiveness = RepetitivenessSummary{stats.variance,
                                                 stats.unique_feature_count};
      }

      if (analyst_log) {
        std::vector<AnalystDecision> decisions;
        decisions.reserve(w.split.validation_ids.size());
        for (const auto& id : w.split.validation_ids) {
          const auto d = analyst_log->decision_for(id);
          if (!d) {
            throw DataError(
                fmt::format("analyst log is missing id '{}'", id));
          }
          decisions.push_back(*d);
        }
        r.association = analyst_association(val_probs, val_yhat, decisions);
        r.confusion =
            confusion_by_decision(proxy_decline, decisions, w.validation.labels);
      }
    });
  });

  // report
  ExperimentRun run{ExperimentReport{}, std::move(dataset),
                    std::move(original_model), std::move(explanation_sets),
                    std::move(analyst_log)};
  ExperimentReport& report = run.report;
  report.tool_version = std::string(kToolVersion);
  report.master_seed = master;
  report.selection_mode =
      cfg.selection == HyperparamSelection::global ? "global" : "per_arm";
  report.data.n_total = run.dataset.size();
  report.data.n_historical = hist_n;
  report.data.n_experiment = experiment.size();
  report.data.d = experiment.d();
  std::size_t frauds = 0;
  for (const auto& t : experiment.transactions()) {
    frauds += static_cast<std::size_t>(t.label);
  }
  report.data.fraud_rate_experiment =
      static_cast<double>(frauds) / static_cast<double>(experiment.size());
  report.original_model = cfg.original_model;
  report.original_model.seed = derive_seed(master, "original-model");
  report.alpha = cfg.alpha;
  report.bootstrap_b = cfg.bootstrap_b;
  report.chargeback_multiplier = cfg.pdr.chargeback_multiplier;
  report.notes = {
      "hyperparameters are selected on validation PDR; the reported PDR "
      "reuses the same validation split",
      "PDR CI bounds are clamped to >= 0 in rendered tables only; stored "
      "bounds are unclamped"};
  report.arms = std::move(results);
  report.config_echo = cfg.config_text;
  return run;
}

// -- report serialization ---------------------------------------------------------------

namespace {

ordered_json hyperparams_to_json(const Hyperparams& hp) {
  return ordered_json{{"family", std::string(to_string(hp.family))},
                      {"min_samples_leaf", hp.min_samples_leaf},
                      {"n_trees", hp.n_trees},
                      {"max_depth", hp.max_depth},
                      {"bootstrap", hp.bootstrap},
                      {"seed", hp.seed}};
}

Hyperparams hyperparams_from_json(const ordered_json& j) {
  Hyperparams hp;
  hp.family = parse_model_family(j.at("family").get<std::string>());
  hp.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
  hp.n_trees = j.at("n_trees").get<std::size_t>();
  hp.max_depth = j.at("max_depth").get<std::size_t>();
  hp.bootstrap = j.at("bootstrap").get<bool>();
  hp.seed = j.at("seed").get<std::uint64_t>();
  return hp;
}

ordered_json pdr_result_to_json(const PdrResult& r) {
  return ordered_json{{"value", r.pdr},
                      {"ci_lo", r.ci.lo},
                      {"ci_hi", r.ci.hi},
                      {"alpha", r.ci.alpha},
                      {"b", r.ci.b}};
}

PdrResult pdr_result_from_json(const ordered_json& j) {
  PdrResult r;
  r.pdr = j.at("value").get<double>();
  r.ci.lo = j.at("ci_lo").get<double>();
  r.ci.hi = j.at("ci_hi").get<double>();
  r.ci.alpha = j.at("alpha").get<double>();
  r.ci.b = j.at("b").get<std::size_t>();
  return r;
}

}  // namespace

std::string report_to_json(const ExperimentReport& report) {
  ordered_json j;
  j["tool"] = ordered_json{{"name", std::string(kToolName)},
                           {"version", report.tool_version}};
  j["master_seed"] = report.master_seed;
  j["selection_mode"] = report.selection_mode;
  j["alpha"] = report.alpha;
  j["bootstrap_b"] = report.bootstrap_b;
  j["chargeback_multiplier"] = report.chargeback_multiplier;
  j["data"] = ordered_json{
      {"n_total", report.data.n_total},
      {"n_historical", report.data.n_historical},
      {"n_experiment", report.data.n_experiment},
      {"d", report.data.d},
      {"fraud_rate_experiment", report.data.fraud_rate_experiment}};
  j["original_model"] = hyperparams_to_json(report.original_model);
  j["notes"] = report.notes;
  ordered_json arms = ordered_json::array();
  for (const auto& arm : report.arms) {
    ordered_json a;
    a["name"] = arm.name;
    a["kind"] = std::string(to_string(arm.kind.id));
    a["explainer"] = arm.kind.explainer
                         ? ordered_json(std::string(to_string(*arm.kind.explainer)))
                         : ordered_json(nullptr);
    a["k"] = arm.k;
    a["input_width"] = arm.input_width;
    a["chosen"] = hyperparams_to_json(arm.chosen);
    ordered_json grid = ordered_json::array();
    for (const auto& entry : arm.grid_table) {
      ordered_json g = hyperparams_to_json(entry.hp);
      g["validation_pdr"] = entry.validation_pdr;
      grid.push_back(std::move(g));
    }
    a["grid"] = std::move(grid);
    a["threshold"] = arm.threshold;
    a["original_threshold"] = arm.original_threshold;
    a["proxy_pdr"] = pdr_result_to_json(arm.proxy);
    a["original_pdr"] = pdr_result_to_json(arm.original);
    a["agreement_rate"] = arm.agreement_rate;
    a["parroting_flagged"] = arm.parroting_flagged;
    a["split_max_ks"] = arm.split_max_ks;
    if (arm.repetitiveness) {
      a["repetitiveness"] =
          ordered_json{{"variance", arm.repetitiveness->variance},
                       {"unique_features",
                        arm.repetitiveness->unique_feature_count}};
    } else {
      a["repetitiveness"] = nullptr;
    }
    if (arm.association) {
      a["association"] =
          ordered_json{{"auc_simeval", arm.association->auc_simeval},
                       {"auc_original", arm.association->auc_original},
                       {"n", arm.association->n}};
    } else {
      a["association"] = nullptr;
    }
    if (arm.confusion) {
      ordered_json rows = ordered_json::array();
      for (std::size_t r = 0; r < 2; ++r) {
        ordered_json cells = ordered_json::array();
        for (std::size_t c = 0; c < 3; ++c) {
          const auto& cell = arm.confusion->cells[r][c];
          ordered_json jc;
          jc["n"] = cell.n;
          jc["fraud_fraction"] = cell.fraud_fraction
                                     ? ordered_json(*cell.fraud_fraction)
                                     : ordered_json(nullptr);
          cells.push_back(std::move(jc));
        }
        rows.push_back(std::move(cells));
      }
      a["confusion"] = std::move(rows);
    } else {
      a["confusion"] = nullptr;
    }
    arms.push_back(std::move(a));
  }
  j["arms"] = std::move(arms);
  j["config"] = report.config_echo;
  return j.dump(2) + "\n";
}

ExperimentReport report_from_json(std::string_view json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const std::exception& e) {
    throw DataError(fmt::format("unreadable report: {}", e.what()));
  }
  try {
    ExperimentReport report;
    report.tool_version = j.at("tool").at("version").get<std::string>();
    report.master_seed = j.at("master_seed").get<std::uint64_t>();
    report.selection_mode = j.at("selection_mode").get<std::string>();
    report.alpha = j.at("alpha").get<double>();
    report.bootstrap_b = j.at("bootstrap_b").get<std::size_t>();
    report.chargeback_multiplier = j.at("chargeback_multiplier").get<double>();
    const auto& data = j.at("data");
    report.data.n_total = data.at("n_total").get<std::size_t>();
    report.data.n_historical = data.at("n_historical").get<std::size_t>();
    report.data.n_experiment = data.at("n_experiment").get<std::size_t>();
    report.data.d = data.at("d").get<std::size_t>();
    report.data.fraud_rate_experiment =
        data.at("fraud_rate_experiment").get<double>();
    report.original_model = hyperparams_from_json(j.at("original_model"));
    report.notes = j.at("notes").get<std::vector<std::string>>();
    for (const auto& a : j.at("arms")) {
      ArmResult arm;
      arm.name = a.at("name").get<std::string>();
      arm.kind.id = parse_arm_kind(a.at("kind").get<std::string>());
      if (!a.at("explainer").is_null()) {
        arm.kind.explainer =
            parse_explainer(a.at("explainer").get<std::string>());
      }
      arm.k = a.at("k").get<std::size_t>();
      arm.input_width = a.at("input_width").get<std::size_t>();
      arm.chosen = hyperparams_from_json(a.at("chosen"));
      for (const auto& g : a.at("grid")) {
        GridEntry entry;
        entry.hp = hyperparams_from_json(g);
        entry.validation_pdr = g.at("validation_pdr").get<double>();
        arm.grid_table.push_back(std::move(entry));
      }
      arm.threshold = a.at("threshold").get<double>();
      arm.original_threshold = a.at("original_threshold").get<double>();
      arm.proxy = pdr_result_from_json(a.at("proxy_pdr"));
      arm.original = pdr_result_from_json(a.at("original_pdr"));
      arm.agreement_rate = a.at("agreement_rate").get<double>();
      arm.parroting_flagged = a.at("parroting_flagged").get<bool>();
      arm.split_max_ks = a.at("split_max_ks").get<double>();
      if (!a.at("repetitiveness").is_null()) {
        RepetitivenessSummary rep;
        rep.variance = a.at("repetitiveness").at("variance").get<double>();
        rep.unique_feature_count =
            a.at("repetitiveness").at("unique_features").get<std::size_t>();
        arm.repetitiveness = rep;
      }
      if (!a.at("association").is_null()) {
        AssociationResult assoc;
        assoc.auc_simeval =
            a.at("association").at("auc_simeval").get<double>();
        assoc.auc_original =
            a.at("association").at("auc_original").get<double>();
        assoc.n = a.at("association").at("n").get<std::size_t>();
        arm.association = assoc;
      }
      if (!a.at("confusion").is_null()) {
        DecisionConfusion confusion;
        const auto& rows = a.at("confusion");
        for (std::size_t r = 0; r < 2; ++r) {
          for (std::size_t c = 0; c < 3; ++c) {
            const auto& cell = rows.at(r).at(c);
            confusion.cells[r][c].n = cell.at("n").get<std::size_t>();
            if (!cell.at("fraud_fraction").is_null()) {
              confusion.cells[r][c].fraud_fraction =
                  cell.at("fraud_fraction").get<double>();
            }
          }
        }
        arm.confusion = confusion;
      }
      report.arms.push_back(std::move(arm));
    }
    report.config_echo = j.at("config").get<std::string>();
    return report;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(fmt::format("unreadable report: {}", e.what()));
  }
}

// -- rendering ------------------------------------------------------------------------

namespace {

std::string format_pdr_cell(const PdrResult& r) {
  // display-only clamp of the lower bound
  return fmt::format("{:.3f} ({:.3f}, {:.3f})", r.pdr,
                     std::max(0.0, r.ci.lo), std::max(0.0, r.ci.hi));
}

const ArmResult* find_baseline(const ExperimentReport& report) {
  for (const auto& arm : report.arms) {
    if (arm.kind.id == ArmKindId::baseline_x_yhat) {
      return &arm;
    }
  }
  return nullptr;
}

}  // namespace

std::string render_report_table(const ExperimentReport& report) {
  if (report.arms.empty()) {
    throw DataError("report has no arms");
  }
  const int level = static_cast<int>(std::lround((1.0 - report.alpha) * 100.0));
  std::string out = fmt::format(
      "SimEval PDR by arm (lower is better; parentheses contain {} percent "
      "pivotal bootstrap CIs)\n",
      level);
  out += fmt::format("{:<18} {:<26} {:<18} {:<24} {:<24}\n", "arm", "kind",
                     "explainer", "original model", "simeval");
  out += std::string(112, '-');
  out += '\n';
  for (const auto& arm : report.arms) {
    out += fmt::format(
        "{:<18} {:<26} {:<18} {:<24} {:<24}\n", arm.name,
        to_string(arm.kind.id),
        arm.kind.explainer ? to_string(*arm.kind.explainer) : "-",
        format_pdr_cell(arm.original), format_pdr_cell(arm.proxy));
  }
  return out;
}

std::string render_report_flags(const ExperimentReport& report) {
  if (report.arms.empty()) {
    throw DataError("report has no arms");
  }
  std::string out = "flags:\n";
  bool any_parrot = false;
  for (const auto& arm : report.arms) {
    if (arm.parroting_flagged) {
      any_parrot = true;
      out += fmt::format(
          "  - parroting: arm '{}' decisions are identical to the thresholded "
          "model score (agreement 1.0)\n",
          arm.name);
    }
  }
  if (!any_parrot) {
    out += "  - parroting: none flagged\n";
  }

  const ArmResult* baseline = find_baseline(report);
  if (baseline == nullptr) {
    out += "  - no baseline arm; CI overlap analysis skipped\n";
    return out;
  }
  bool any_candidate = false;
  for (const auto& arm : report.arms) {
    if (&arm == baseline || !arm.kind.includes_explanation()) {
      continue;
    }
    const bool overlap = arm.proxy.ci.lo <= baseline->proxy.ci.hi &&
                         baseline->proxy.ci.lo <= arm.proxy.ci.hi;
    if (!overlap && arm.proxy.ci.hi < baseline->proxy.ci.lo) {
      any_candidate = true;
      out += fmt::format(
          "  - candidate: arm '{}' separates below baseline '{}' "
          "({:.3f}, {:.3f}) vs ({:.3f}, {:.3f})\n",
          arm.name, baseline->name, std::max(0.0, arm.proxy.ci.lo),
          std::max(0.0, arm.proxy.ci.hi), std::max(0.0, baseline->proxy.ci.lo),
          std::max(0.0, baseline->proxy.ci.hi));
    } else if (!overlap) {
      out += fmt::format(
          "  - arm '{}' separates above baseline '{}'\n", arm.name,
          baseline->name);
    }
  }
  if (!any_candidate) {
    out += "  - no explainer separates from baseline\n";
  }
  return out;
}

}  // namespace simeval
