#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "simeval/common.hpp"
#include "simeval/data.hpp"
#include "simeval/explain.hpp"
#include "simeval/metrics.hpp"
#include "simeval/tree.hpp"

namespace simeval {

/// Minimal INI reader: `[section]` lines, `key = value` entries, full-line
/// comments starting with '#' or ';'. Sections and keys keep file order.
struct IniFile {
  struct Section {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;

    const std::string* find(std::string_view key) const;
  };

  std::vector<Section> sections;

  const Section* find_section(std::string_view name) const;
};

IniFile parse_ini(std::string_view text);
IniFile load_ini(const std::filesystem::path& path);

enum class ArmKindId { baseline_x_yhat, full_x_yhat_e, explanation_only_yhat_e };

std::string_view to_string(ArmKindId k);
ArmKindId parse_arm_kind(std::string_view s);

/// One experimental condition: which information tuple the proxy model sees.
struct ArmKind {
  ArmKindId id = ArmKindId::baseline_x_yhat;
  std::optional<ExplainerKind> explainer;

  bool includes_explanation() const {
    return id != ArmKindId::baseline_x_yhat;
  }
  bool includes_x() const { return id != ArmKindId::explanation_only_yhat_e; }
};

struct ArmSpec {
  std::string name;
  ArmKind kind;
  std::size_t k = 6;  // explanation sparsity
  // Grid axes; expanded against n_trees into Hyperparams candidates.
  std::vector<ModelFamily> grid_families;
  std::vector<std::size_t> grid_min_samples_leaf;
  std::size_t grid_n_trees = 100;
};

enum class HyperparamSelection { global, per_arm };

struct DataSection {
  bool synthetic = true;
  std::filesystem::path transactions_path;  // file mode
  SyntheticConfig generator;                // synthetic mode
  std::size_t historical_count = 2000;
  std::size_t train_size = 1000;
  std::size_t validation_size = 500;
  // analyst source: none, simulate (uses `analyst_model`) or file
  std::string analyst_source = "none";
  std::filesystem::path analyst_log_path;
  AnalystModel analyst_model;
};

struct ExperimentConfig {
  std::uint64_t master_seed = 0;
  DataSection data;
  Hyperparams original_model;
  std::vector<ArmSpec> arms;
  std::size_t bootstrap_b = 2000;
  double alpha = 0.10;
  PdrParams pdr;
  HyperparamSelection selection = HyperparamSelection::global;
  LimeConfig lime;
  std::filesystem::path out_dir = "out";
  std::string config_text;  // verbatim echo of the parsed file
};

ExperimentConfig parse_experiment_config(const IniFile& ini,
                                         std::string config_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

}  // namespace simeval
