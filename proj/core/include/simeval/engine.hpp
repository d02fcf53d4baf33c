#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simeval/config.hpp"
#include "simeval/data.hpp"
#include "simeval/explain.hpp"
#include "simeval/metrics.hpp"
#include "simeval/tree.hpp"

namespace simeval {

/// Proxy-model input rows for one arm. Columns follow the fixed order
/// [x (d) | yhat (1) | E (d, dense-embedded sparse)], with the x and/or E
/// block omitted by the arm kind; `layout` records the mapping.
struct AssembledInputs {
  Matrix x;
  std::vector<std::string> layout;
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<double> amounts;
};

AssembledInputs assemble_inputs(const ArmKind& kind, const Dataset& dataset,
                                std::span<const std::string> ids,
                                const Model& original_model,
                                const ExplanationSet* explanations);

/// A fitted proxy with its decision threshold: probability > threshold means
/// decline.
struct ProxyModel {
  Model model;
  double threshold = 0.5;
  std::vector<std::string> input_layout;
};

/// Threshold minimizing PDR over the given rows; candidates are midpoints of
/// consecutive sorted unique probabilities plus {0,1}, ties resolved to the
/// lowest threshold.
double select_threshold_min_pdr(std::span<const double> probabilities,
                                std::span<const int> labels,
                                std::span<const double> amounts,
                                const PdrParams& params);

struct PdrResult {
  double pdr = 0.0;
  CI ci;
};

struct ArmRuntimeConfig {
  std::string name;
  ArmKind kind;
  GridSpec grid;
  std::size_t k = 6;
  BootstrapParams bootstrap;
  PdrParams pdr;
  unsigned parallelism = 1;
};

struct TrainProxyResult {
  ProxyModel proxy;
  Hyperparams chosen;
  std::vector<GridEntry> grid_table;
};

/// Grid search with a validation-PDR objective (per-candidate thresholds
/// selected on the train split), refit of the winner, then threshold
/// selection on the train split.
TrainProxyResult train_proxy(const ArmRuntimeConfig& arm,
                             const AssembledInputs& train,
                             const AssembledInputs& validation);

PdrResult evaluate_arm(const ProxyModel& proxy,
                       const AssembledInputs& validation,
                       const BootstrapParams& bootstrap,
                       const PdrParams& params);

struct ParrotingDiagnostic {
  PdrResult original;
  PdrResult proxy;
  double agreement_rate = 0.0;
  bool flagged = false;
};

/// Compares thresholded original-model decisions with the proxy's decisions
/// on the same validation rows; agreement 1.0 flags a parroting proxy.
ParrotingDiagnostic parroting_diagnostic(std::span<const std::uint8_t> original_decline,
                                         std::span<const std::uint8_t> proxy_decline,
                                         std::span<const int> labels,
                                         std::span<const double> amounts,
                                         const BootstrapParams& bootstrap,
                                         const PdrParams& params);

struct RepetitivenessSummary {
  double variance = 0.0;
  std::size_t unique_feature_count = 0;
};

struct ArmResult {
  std::string name;
  ArmKind kind;
  std::size_t k = 6;
  std::size_t input_width = 0;
  Hyperparams chosen;
  std::vector<GridEntry> grid_table;
  double threshold = 0.0;
  double original_threshold = 0.0;
  PdrResult proxy;
  PdrResult original;
  double agreement_rate = 0.0;
  bool parroting_flagged = false;
  double split_max_ks = 0.0;
  std::optional<RepetitivenessSummary> repetitiveness;
  std::optional<AssociationResult> association;
  std::optional<DecisionConfusion> confusion;
};

struct DataSummary {
  std::size_t n_total = 0;
  std::size_t n_historical = 0;
  std::size_t n_experiment = 0;
  std::size_t d = 0;
  double fraud_rate_experiment = 0.0;
};

struct ExperimentReport {
  std::string tool_version;
  std::uint64_t master_seed = 0;
  std::string selection_mode;
  DataSummary data;
  Hyperparams original_model;
  double alpha = 0.10;
  std::size_t bootstrap_b = 0;
  double chargeback_multiplier = 1.0;
  std::vector<std::string> notes;
  std::vector<ArmResult> arms;
  std::string config_echo;
};

/// Everything a run produces; the report plus the artifacts callers may want
/// to persist.
struct ExperimentRun {
  ExperimentReport report;
  Dataset dataset;
  Model original_model;
  std::vector<ExplanationSet> explanation_sets;
  std::optional<AnalystLog> analyst_log;
};

/// Full pipeline: data, original model on the historical slice, explanations,
/// Fig-2-style splits, per-arm grid search / proxy training / evaluation.
/// Deterministic per master seed, also under parallelism > 1.
ExperimentRun run_experiment(const ExperimentConfig& cfg,
                             unsigned parallelism = 1);

std::string report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(std::string_view json_text);

/// Human-readable table mirroring the arm/original/simeval layout.
std::string render_report_table(const ExperimentReport& report);
/// Parroting and baseline CI-overlap flags.
std::string render_report_flags(const ExperimentReport& report);

}  // namespace simeval
