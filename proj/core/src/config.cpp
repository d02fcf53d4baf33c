#include "simeval/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace simeval {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                        s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

double to_double(const std::string& value, const std::string& where) {
  double out = 0.0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) {
    throw ConfigError(fmt::format("{}: expected a number, got '{}'", where,
                                  value));
  }
  return out;
}

std::uint64_t to_u64(const std::string& value, const std::string& where) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(fmt::format(
        "{}: expected a non-negative integer, got '{}'", where, value));
  }
  return out;
}

bool to_bool(const std::string& value, const std::string& where) {
  if (value == "true" || value == "1") {
    return true;
  }
  if (value == "false" || value == "0") {
    return false;
  }
  throw ConfigError(
      fmt::format("{}: expected true/false, got '{}'", where, value));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::size_t start = 0;
  while (start <= value.size()) {
    const std::size_t pos = value.find(',', start);
    const std::size_t stop = pos == std::string::npos ? value.size() : pos;
    const auto item = trim(std::string_view(value).substr(start, stop - start));
    if (!item.empty()) {
      items.emplace_back(item);
    }
    if (pos == std::string::npos) {
      break;
    }
    start = pos + 1;
  }
  return items;
}

/// Typed view over one section that tracks which keys were consumed, so
/// unknown keys can be reported as config errors.
class SectionReader {
 public:
  SectionReader(const IniFile& ini, std::string name)
      : name_(std::move(name)), section_(ini.find_section(name_)) {}

  bool exists() const { return section_ != nullptr; }

  std::optional<std::string> get(const std::string& key) {
    consumed_.insert(key);
    if (section_ == nullptr) {
      return std::nullopt;
    }
    const auto* value = section_->find(key);
    return value ? std::optional<std::string>(*value) : std::nullopt;
  }

  std::string require(const std::string& key) {
    auto value = get(key);
    if (!value) {
      throw ConfigError(
          fmt::format("[{}]: missing required key '{}'", name_, key));
    }
    return *value;
  }

  double get_double(const std::string& key, double fallback) {
    const auto value = get(key);
    return value ? to_double(*value, where(key)) : fallback;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    const auto value = get(key);
    return value ? to_u64(*value, where(key)) : fallback;
  }

  bool get_bool(const std::string& key, bool fallback) {
    const auto value = get(key);
    return value ? to_bool(*value, where(key)) : fallback;
  }

  std::string get_string(const std::string& key, std::string fallback) {
    const auto value = get(key);
    return value ? *value : fallback;
  }

  std::string where(const std::string& key) const {
    return fmt::format("[{}] {}", name_, key);
  }

  void reject_unknown_keys() const {
    if (section_ == nullptr) {
      return;
    }
    for (const auto& [key, value] : section_->entries) {
      if (!consumed_.contains(key)) {
        throw ConfigError(
            fmt::format("[{}]: unknown key '{}'", name_, key));
      }
    }
  }

 private:
  std::string name_;
  const IniFile::Section* section_;
  std::set<std::string> consumed_;
};

ArmSpec parse_arm(const IniFile& ini, const std::string& section_name,
                  const std::string& arm_name) {
  SectionReader reader(ini, section_name);
  ArmSpec arm;
  arm.name = arm_name;
  arm.kind.id = parse_arm_kind(reader.require("kind"));
  const auto explainer = reader.get("explainer");
  if (arm.kind.includes_explanation()) {
    if (!explainer) {
      throw ConfigError(fmt::format(
          "[{}]: kind '{}' requires an explainer", section_name,
          to_string(arm.kind.id)));
    }
    arm.kind.explainer = parse_explainer(*explainer);
  } else if (explainer) {
    throw ConfigError(fmt::format(
        "[{}]: baseline arms must not name an explainer", section_name));
  }
  arm.k = static_cast<std::size_t>(reader.get_u64("k", 6));
  if (arm.k == 0) {
    throw ConfigError(fmt::format("[{}]: k must be >= 1", section_name));
  }

  arm.grid_families = {ModelFamily::random_forest, ModelFamily::decision_tree};
  if (const auto families = reader.get("grid_families")) {
    arm.grid_families.clear();
    for (const auto& f : split_list(*families)) {
      arm.grid_families.push_back(parse_model_family(f));
    }
    if (arm.grid_families.empty()) {
      throw ConfigError(
          fmt::format("[{}]: grid_families must not be empty", section_name));
    }
  }
  arm.grid_min_samples_leaf = {5, 10, 15, 20, 25, 30};
  if (const auto minima = reader.get("grid_min_samples_leaf")) {
    arm.grid_min_samples_leaf.clear();
    for (const auto& m : split_list(*minima)) {
      arm.grid_min_samples_leaf.push_back(static_cast<std::size_t>(
          to_u64(m, reader.where("grid_min_samples_leaf"))));
    }
    if (arm.grid_min_samples_leaf.empty()) {
      throw ConfigError(fmt::format(
          "[{}]: grid_min_samples_leaf must not be empty", section_name));
    }
  }
  arm.grid_n_trees =
      static_cast<std::size_t>(reader.get_u64("grid_n_trees", 100));
  if (arm.grid_n_trees == 0) {
    throw ConfigError(
        fmt::format("[{}]: grid_n_trees must be >= 1", section_name));
  }
  reader.reject_unknown_keys();
  return arm;
}

}  // namespace

// -- IniFile -----------------------------------------------------------------------

const std::string* IniFile::Section::find(std::string_view key) const {
  for (const auto& [k, v] : entries) {
    if (k == key) {
      return &v;
    }
  }
  return nullptr;
}

const IniFile::Section* IniFile::find_section(std::string_view name) const {
  for (const auto& s : sections) {
    if (s.name == name) {
      return &s;
    }
  }
  return nullptr;
}

IniFile parse_ini(std::string_view text) {
  IniFile ini;
  IniFile::Section* current = nullptr;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t pos = text.find('\n', start);
    const std::size_t stop = pos == std::string_view::npos ? text.size() : pos;
    const auto line = trim(text.substr(start, stop - start));
    ++line_no;
    start = stop + 1;
    if (pos == std::string_view::npos && line.empty()) {
      break;
    }
    if (line.empty() || line.front() == '#' || line.front() == ';') {
      if (pos == std::string_view::npos) {
        break;
      }
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError(
            fmt::format("config line {}: malformed section header", line_no));
      }
      const auto name = trim(line.substr(1, line.size() - 2));
      if (name.empty()) {
        throw ConfigError(
            fmt::format("config line {}: empty section name", line_no));
      }
      if (ini.find_section(name) != nullptr) {
        throw ConfigError(fmt::format(
            "config line {}: duplicate section '[{}]'", line_no, name));
      }
      ini.sections.push_back({std::string(name), {}});
      current = &ini.sections.back();
    } else {
      const std::size_t eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError(fmt::format(
            "config line {}: expected 'key = value' or '[section]'", line_no));
      }
      if (current == nullptr) {
        throw ConfigError(fmt::format(
            "config line {}: key outside of any section", line_no));
      }
      const auto key = trim(line.substr(0, eq));
      const auto value = trim(line.substr(eq + 1));
      if (key.empty()) {
        throw ConfigError(fmt::format("config line {}: empty key", line_no));
      }
      if (current->find(key) != nullptr) {
        throw ConfigError(fmt::format(
            "config line {}: duplicate key '{}' in '[{}]'", line_no, key,
            current->name));
      }
      current->entries.emplace_back(key, value);
    }
    if (pos == std::string_view::npos) {
      break;
    }
  }
  return ini;
}

IniFile load_ini(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError(fmt::format("cannot open config: {}", path.string()));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_ini(buf.str());
}

// -- arm kinds ----------------------------------------------------------------------

std::string_view to_string(ArmKindId k) {
  switch (k) {
    case ArmKindId::baseline_x_yhat:
      return "baseline_x_yhat";
    case ArmKindId::full_x_yhat_e:
      return "full_x_yhat_e";
    case ArmKindId::explanation_only_yhat_e:
      return "explanation_only_yhat_e";
  }
  throw ComputeError("invalid arm kind");
}

ArmKindId parse_arm_kind(std::string_view s) {
  if (s == "baseline" || s == "baseline_x_yhat") {
    return ArmKindId::baseline_x_yhat;
  }
  if (s == "full" || s == "full_x_yhat_e") {
    return ArmKindId::full_x_yhat_e;
  }
  if (s == "explanation_only" || s == "explanation_only_yhat_e") {
    return ArmKindId::explanation_only_yhat_e;
  }
  throw ConfigError(fmt::format("unknown arm kind '{}'", s));
}

// -- experiment config -----------------------------------------------------------------

ExperimentConfig parse_experiment_config(const IniFile& ini,
                                         std::string config_text) {
  static const std::set<std::string> known = {"data", "original_model",
                                              "metrics", "lime", "output"};
  for (const auto& section : ini.sections) {
    if (!known.contains(section.name) &&
        !section.name.starts_with("arms.")) {
      throw ConfigError(
          fmt::format("unknown config section '[{}]'", section.name));
    }
  }

  ExperimentConfig cfg;
  cfg.config_text = std::move(config_text);

  SectionReader data(ini, "data");
  if (!data.exists()) {
    throw ConfigError("config needs a [data] section");
  }
  cfg.master_seed = data.get_u64("seed", 0);
  const std::string source = data.get_string("source", "synthetic");
  if (source == "synthetic") {
    cfg.data.synthetic = true;
  } else if (source == "file") {
    cfg.data.synthetic = false;
    cfg.data.transactions_path = data.require("transactions");
  } else {
    throw ConfigError(fmt::format(
        "[data] source must be 'synthetic' or 'file', got '{}'", source));
  }
  auto& gen = cfg.data.generator;
  gen.n = static_cast<std::size_t>(data.get_u64("n", 4000));
  gen.d = static_cast<std::size_t>(data.get_u64("d", 112));
  gen.fraud_rate = data.get_double("fraud_rate", 0.15);
  gen.signal.noise = data.get_double("noise", 0.1);
  gen.signal.features = {0, 1, 2};
  if (const auto features = data.get("signal_features")) {
    gen.signal.features.clear();
    for (const auto& f : split_list(*features)) {
      gen.signal.features.push_back(static_cast<std::size_t>(
          to_u64(f, data.where("signal_features"))));
    }
  }
  if (const auto weights = data.get("signal_weights")) {
    for (const auto& w : split_list(*weights)) {
      gen.signal.weights.push_back(
          to_double(w, data.where("signal_weights")));
    }
  }
  if (const auto threshold = data.get("signal_threshold")) {
    gen.signal.threshold = to_double(*threshold, data.where("signal_threshold"));
  }
  gen.amount.mu_log = data.get_double("amount_mu_log", 4.0);
  gen.amount.sigma_log = data.get_double("amount_sigma_log", 1.0);
  // transactions may be listed in synthetic mode too (ignored); reject that.
  if (cfg.data.synthetic && data.get("transactions")) {
    throw ConfigError("[data]: 'transactions' is only valid with source = file");
  }
  cfg.data.historical_count =
      static_cast<std::size_t>(data.get_u64("historical_count", 2000));
  cfg.data.train_size = static_cast<std::size_t>(data.get_u64("train_size", 1000));
  cfg.data.validation_size =
      static_cast<std::size_t>(data.get_u64("validation_size", 500));
  cfg.data.analyst_source = data.get_string("analyst", "none");
  if (cfg.data.analyst_source == "file") {
    cfg.data.analyst_log_path = data.require("analyst_log");
  } else if (cfg.data.analyst_source == "simulate") {
    cfg.data.analyst_model.error_rate_fraud =
        data.get_double("analyst_error_fraud", 0.1);
    cfg.data.analyst_model.error_rate_legit =
        data.get_double("analyst_error_legit", 0.05);
    cfg.data.analyst_model.suspicious_rate =
        data.get_double("analyst_suspicious_rate", 0.1);
  } else if (cfg.data.analyst_source != "none") {
    throw ConfigError(fmt::format(
        "[data] analyst must be none, simulate or file, got '{}'",
        cfg.data.analyst_source));
  } else {
    // consume the keys so reject_unknown_keys stays quiet about defaults
    data.get("analyst_log");
    data.get("analyst_error_fraud");
    data.get("analyst_error_legit");
    data.get("analyst_suspicious_rate");
  }
  data.reject_unknown_keys();

  SectionReader original(ini, "original_model");
  cfg.original_model.family = parse_model_family(
      original.get_string("family", "random_forest"));
  cfg.original_model.n_trees =
      static_cast<std::size_t>(original.get_u64("n_trees", 200));
  cfg.original_model.min_samples_leaf =
      static_cast<std::size_t>(original.get_u64("min_samples_leaf", 5));
  cfg.original_model.max_depth =
      static_cast<std::size_t>(original.get_u64("max_depth", 0));
  cfg.original_model.bootstrap = original.get_bool("bootstrap", true);
  original.reject_unknown_keys();

  for (const auto& section : ini.sections) {
    if (!section.name.starts_with("arms.")) {
      continue;
    }
    const std::string arm_name = section.name.substr(5);
    if (arm_name.empty()) {
      throw ConfigError("arm section needs a name: [arms.<name>]");
    }
    cfg.arms.push_back(parse_arm(ini, section.name, arm_name));
  }
  if (cfg.arms.empty()) {
    throw ConfigError("config needs at least one [arms.<name>] section");
  }

  SectionReader metrics(ini, "metrics");
  cfg.bootstrap_b = static_cast<std::size_t>(metrics.get_u64("bootstrap_b", 2000));
  cfg.alpha = metrics.get_double("alpha", 0.10);
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
    throw ConfigError("[metrics] alpha must be in (0,1)");
  }
  cfg.pdr.chargeback_multiplier =
      metrics.get_double("chargeback_multiplier", 1.0);
  if (cfg.pdr.chargeback_multiplier < 0.0) {
    throw ConfigError("[metrics] chargeback_multiplier must be >= 0");
  }
  const std::string selection =
      metrics.get_string("hyperparam_selection", "global");
  if (selection == "global") {
    cfg.selection = HyperparamSelection::global;
  } else if (selection == "per_arm") {
    cfg.selection = HyperparamSelection::per_arm;
  } else {
    throw ConfigError(fmt::format(
        "[metrics] hyperparam_selection must be global or per_arm, got '{}'",
        selection));
  }
  metrics.reject_unknown_keys();

  SectionReader lime(ini, "lime");
  cfg.lime.n_samples = static_cast<std::size_t>(lime.get_u64("n_samples", 5000));
  cfg.lime.kernel_width = lime.get_double("kernel_width", 0.0);
  cfg.lime.ridge_penalty = lime.get_double("ridge_penalty", 1.0);
  lime.reject_unknown_keys();

  SectionReader output(ini, "output");
  cfg.out_dir = output.get_string("dir", "out");
  output.reject_unknown_keys();

  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError(fmt::format("cannot open config: {}", path.string()));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  IniFile ini = parse_ini(text);
  return parse_experiment_config(ini, std::move(text));
}

}  // namespace simeval
