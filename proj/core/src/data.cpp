#include "simeval/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

namespace simeval {

namespace {

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

double parse_double(std::string_view cell, const std::string& what) {
  double value = 0.0;
  const auto* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw DataError(fmt::format("{}: not a finite number: '{}'", what, cell));
  }
  return value;
}

std::string format_double(double v) { return fmt::format("{}", v); }

void require_no_comma(std::string_view s, const std::string& what) {
  if (s.find(',') != std::string_view::npos) {
    throw DataError(fmt::format("{} must not contain ',': '{}'", what, s));
  }
}

std::string expected_header(const FeatureSchema& schema) {
  std::string header = "id,amount,label";
  for (const auto& f : schema.features()) {
    header += ',';
    header += f.name;
  }
  return header;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError(fmt::format("cannot open file: {}", path.string()));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Splits file content into lines; tolerates a missing trailing newline and
// strips '\r'.
std::vector<std::string> file_lines(const std::string& content) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= content.size()) {
    const std::size_t pos = content.find('\n', start);
    if (pos == std::string::npos) {
      if (start < content.size()) {
        lines.push_back(content.substr(start));
      }
      break;
    }
    std::string line = content.substr(start, pos - start);
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    lines.push_back(std::move(line));
    start = pos + 1;
  }
  return lines;
}

}  // namespace

// -- FeatureSchema ------------------------------------------------------------

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> features)
    : features_(std::move(features)) {
  if (features_.empty()) {
    throw ConfigError("schema must declare at least one feature");
  }
  for (std::size_t j = 0; j < features_.size(); ++j) {
    const auto& f = features_[j];
    if (f.name.empty()) {
      throw ConfigError(fmt::format("feature {} has an empty name", j));
    }
    if (!index_.emplace(f.name, j).second) {
      throw ConfigError(fmt::format("duplicate feature name '{}'", f.name));
    }
    if (f.kind == FeatureKind::categorical) {
      if (f.categories.size() < 2) {
        throw ConfigError(fmt::format(
            "categorical feature '{}' needs at least 2 categories", f.name));
      }
      auto sorted = f.categories;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ConfigError(fmt::format(
            "categorical feature '{}' has duplicate categories", f.name));
      }
    }
  }
}

FeatureSchema FeatureSchema::numeric(std::size_t d) {
  std::vector<std::string> names;
  names.reserve(d);
  for (std::size_t j = 0; j < d; ++j) {
    names.push_back(fmt::format("f{}", j));
  }
  return numeric(std::move(names));
}

FeatureSchema FeatureSchema::numeric(std::vector<std::string> names) {
  std::vector<FeatureSpec> specs;
  specs.reserve(names.size());
  for (auto& name : names) {
    specs.push_back({std::move(name), FeatureKind::numeric, {}});
  }
  return FeatureSchema(std::move(specs));
}

std::optional<std::size_t> FeatureSchema::index_of(
    std::string_view name) const {
  const auto it = index_.find(std::string(name));
  return it == index_.end() ? std::nullopt
                            : std::optional<std::size_t>(it->second);
}

double FeatureSchema::encode(std::size_t j, std::string_view cell) const {
  const auto& f = features_.at(j);
  if (f.kind == FeatureKind::numeric) {
    return parse_double(cell, fmt::format("feature '{}'", f.name));
  }
  const auto it = std::find(f.categories.begin(), f.categories.end(), cell);
  if (it == f.categories.end()) {
    throw DataError(fmt::format("unknown category '{}' for feature '{}'", cell,
                                f.name));
  }
  return static_cast<double>(it - f.categories.begin());
}

std::string FeatureSchema::decode(std::size_t j, double value) const {
  const auto& f = features_.at(j);
  if (f.kind == FeatureKind::numeric) {
    return format_double(value);
  }
  const auto code = static_cast<std::size_t>(value);
  if (static_cast<double>(code) != value || code >= f.categories.size()) {
    throw DataError(fmt::format("value {} is not a category code of '{}'",
                                value, f.name));
  }
  return f.categories[code];
}

bool FeatureSchema::operator==(const FeatureSchema& other) const {
  if (features_.size() != other.features_.size()) {
    return false;
  }
  for (std::size_t j = 0; j < features_.size(); ++j) {
    const auto& a = features_[j];
    const auto& b = other.features_[j];
    if (a.name != b.name || a.kind != b.kind || a.categories != b.categories) {
      return false;
    }
  }
  return true;
}

// -- Dataset -------------------------------------------------------------------

Dataset::Dataset(FeatureSchema schema, std::vector<Transaction> transactions)
    : schema_(std::move(schema)), transactions_(std::move(transactions)) {
  for (std::size_t i = 0; i < transactions_.size(); ++i) {
    const auto& t = transactions_[i];
    if (t.id.empty()) {
      throw DataError(fmt::format("transaction {} has an empty id", i));
    }
    if (t.features.size() != schema_.d()) {
      throw DataError(fmt::format(
          "transaction '{}' has {} features, schema expects {}", t.id,
          t.features.size(), schema_.d()));
    }
    if (!(t.amount > 0.0) || !std::isfinite(t.amount)) {
      throw DataError(
          fmt::format("transaction '{}' has non-positive amount", t.id));
    }
    if (t.label != 0 && t.label != 1) {
      throw DataError(fmt::format("transaction '{}' has label {}; must be 0 "
                                  "or 1",
                                  t.id, t.label));
    }
    if (!index_.emplace(t.id, i).second) {
      throw DataError(fmt::format("duplicate transaction id '{}'", t.id));
    }
  }
}

std::optional<std::size_t> Dataset::index_of(const std::string& id) const {
  const auto it = index_.find(id);
  return it == index_.end() ? std::nullopt
                            : std::optional<std::size_t>(it->second);
}

const Transaction& Dataset::by_id(const std::string& id) const {
  const auto idx = index_of(id);
  if (!idx) {
    throw DataError(fmt::format("unknown transaction id '{}'", id));
  }
  return transactions_[*idx];
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > transactions_.size()) {
    throw DataError(fmt::format("invalid slice [{}, {}) of {} transactions",
                                begin, end, transactions_.size()));
  }
  return Dataset(schema_, {transactions_.begin() +
                               static_cast<std::ptrdiff_t>(begin),
                           transactions_.begin() +
                               static_cast<std::ptrdiff_t>(end)});
}

Dataset Dataset::subset(std::span<const std::string> ids) const {
  std::vector<Transaction> rows;
  rows.reserve(ids.size());
  for (const auto& id : ids) {
    rows.push_back(by_id(id));
  }
  return Dataset(schema_, std::move(rows));
}

// -- transactions file ---------------------------------------------------------

namespace {

Dataset load_transactions_impl(const std::filesystem::path& path,
                               const FeatureSchema& schema) {
  const auto lines = file_lines(read_file(path));
  if (lines.empty()) {
    throw DataError(fmt::format("{}: missing header", path.string()));
  }
  const std::string want = expected_header(schema);
  if (lines[0] != want) {
    throw DataError(fmt::format("{}: bad header: expected '{}', got '{}'",
                                path.string(), want, lines[0]));
  }
  std::vector<Transaction> rows;
  rows.reserve(lines.size() - 1);
  std::vector<std::string> seen_order;
  std::unordered_map<std::string, bool> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t row = i;  // 1-based data row
    const auto fail = [&](const std::string& cause) -> DataError {
      return DataError(
          fmt::format("{}: row {}: {}", path.string(), row, cause));
    };
    const auto cells = split_line(lines[i]);
    if (cells.size() != 3 + schema.d()) {
      throw fail(fmt::format("expected {} fields, got {}", 3 + schema.d(),
                             cells.size()));
    }
    Transaction t;
    t.id = std::string(cells[0]);
    if (t.id.empty()) {
      throw fail("empty id");
    }
    if (!seen.emplace(t.id, true).second) {
      throw fail(fmt::format("duplicate id '{}'", t.id));
    }
    try {
      t.amount = parse_double(cells[1], "amount");
    } catch (const DataError& e) {
      throw fail(e.what());
    }
    if (!(t.amount > 0.0)) {
      throw fail("non-positive amount");
    }
    if (cells[2] == "0") {
      t.label = 0;
    } else if (cells[2] == "1") {
      t.label = 1;
    } else {
      throw fail(fmt::format("label must be 0 or 1, got '{}'", cells[2]));
    }
    t.features.reserve(schema.d());
    for (std::size_t j = 0; j < schema.d(); ++j) {
      try {
        t.features.push_back(schema.encode(j, cells[3 + j]));
      } catch (const DataError& e) {
        throw fail(e.what());
      }
    }
    rows.push_back(std::move(t));
  }
  return Dataset(schema, std::move(rows));
}

}  // namespace

Dataset load_transactions(const std::filesystem::path& path,
                          const FeatureSchema& schema) {
  return load_transactions_impl(path, schema);
}

Dataset load_transactions(const std::filesystem::path& path) {
  const auto lines = file_lines(read_file(path));
  if (lines.empty()) {
    throw DataError(fmt::format("{}: missing header", path.string()));
  }
  auto cells = split_line(lines[0]);
  if (cells.size() < 4 || cells[0] != "id" || cells[1] != "amount" ||
      cells[2] != "label") {
    throw DataError(fmt::format(
        "{}: bad header: expected 'id,amount,label,<features...>'",
        path.string()));
  }
  std::vector<std::string> names;
  names.reserve(cells.size() - 3);
  for (std::size_t j = 3; j < cells.size(); ++j) {
    names.emplace_back(cells[j]);
  }
  return load_transactions_impl(path, FeatureSchema::numeric(std::move(names)));
}

void save_transactions(const Dataset& dataset,
                       const std::filesystem::path& path) {
  std::string out = expected_header(dataset.schema());
  out += '\n';
  for (const auto& t : dataset.transactions()) {
    require_no_comma(t.id, "transaction id");
    out += t.id;
    out += ',';
    out += format_double(t.amount);
    out += ',';
    out += t.label == 1 ? '1' : '0';
    for (std::size_t j = 0; j < dataset.d(); ++j) {
      const std::string cell = dataset.schema().decode(j, t.features[j]);
      require_no_comma(cell, "feature value");
      out += ',';
      out += cell;
    }
    out += '\n';
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw DataError(fmt::format("cannot write file: {}", path.string()));
  }
  file << out;
}

// -- synthetic generator --------------------------------------------------------

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n < 1) {
    throw ConfigError("synthetic config: n must be >= 1");
  }
  if (cfg.d < 1) {
    throw ConfigError("synthetic config: d must be >= 1");
  }
  if (!(cfg.fraud_rate > 0.0 && cfg.fraud_rate < 1.0)) {
    throw ConfigError("synthetic config: fraud_rate must be in (0,1)");
  }
  if (!(cfg.signal.noise >= 0.0 && cfg.signal.noise <= 1.0)) {
    throw ConfigError("synthetic config: noise must be in [0,1]");
  }
  if (cfg.signal.features.empty()) {
    throw ConfigError("synthetic config: degenerate signal_spec: no signal "
                      "features");
  }
  for (const auto j : cfg.signal.features) {
    if (j >= cfg.d) {
      throw ConfigError(fmt::format(
          "synthetic config: signal feature {} outside schema (d={})", j,
          cfg.d));
    }
  }
  std::vector<double> weights = cfg.signal.weights;
  if (weights.empty()) {
    weights.assign(cfg.signal.features.size(), 1.0);
  }
  if (weights.size() != cfg.signal.features.size()) {
    throw ConfigError("synthetic config: signal_weights length must match "
                      "signal_features");
  }
  if (std::all_of(weights.begin(), weights.end(),
                  [](double w) { return w == 0.0; })) {
    throw ConfigError("synthetic config: degenerate signal_spec: all weights "
                      "zero");
  }
  if (!(cfg.amount.sigma_log >= 0.0)) {
    throw ConfigError("synthetic config: amount sigma_log must be >= 0");
  }

  Rng rng(cfg.seed);
  std::vector<Transaction> rows(cfg.n);
  std::vector<double> scores(cfg.n, 0.0);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    auto& t = rows[i];
    t.id = fmt::format("t{:07}", i + 1);
    t.features.resize(cfg.d);
    for (std::size_t j = 0; j < cfg.d; ++j) {
      t.features[j] = rng.normal();
    }
    t.amount = rng.lognormal(cfg.amount.mu_log, cfg.amount.sigma_log);
    double s = 0.0;
    for (std::size_t k = 0; k < cfg.signal.features.size(); ++k) {
      s += weights[k] * t.features[cfg.signal.features[k]];
    }
    scores[i] = s;
  }

  double threshold = 0.0;
  if (cfg.signal.threshold) {
    threshold = *cfg.signal.threshold;
  } else {
    // In-sample calibration: the rule fires on round(n * fraud_rate) rows.
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    long long k_signed =
        std::llround(static_cast<double>(cfg.n) * cfg.fraud_rate);
    k_signed = std::clamp(k_signed, 0LL, static_cast<long long>(cfg.n));
    const auto k = static_cast<std::size_t>(k_signed);
    if (k == 0) {
      threshold = sorted.front() + 1.0;
    } else if (k == cfg.n) {
      threshold = sorted.back() - 1.0;
    } else {
      threshold = 0.5 * (sorted[k - 1] + sorted[k]);
    }
  }

  for (std::size_t i = 0; i < cfg.n; ++i) {
    int label = scores[i] > threshold ? 1 : 0;
    if (rng.bernoulli(cfg.signal.noise)) {
      label = rng.bernoulli(cfg.fraud_rate) ? 1 : 0;
    }
    rows[i].label = label;
  }

  return Dataset(FeatureSchema::numeric(cfg.d), std::move(rows));
}

// -- arm splits -----------------------------------------------------------------

std::vector<ArmSplit> make_arm_splits(const Dataset& dataset,
                                      std::span<const std::string> arm_names,
                                      std::uint64_t seed,
                                      const SplitProtocol& protocol) {
  if (arm_names.empty()) {
    throw ConfigError("make_arm_splits: no arm names");
  }
  {
    std::unordered_map<std::string, bool> seen;
    for (const auto& name : arm_names) {
      if (!seen.emplace(name, true).second) {
        throw ConfigError(fmt::format("duplicate arm name '{}'", name));
      }
    }
  }
  if (protocol.train_size < 1 || protocol.validation_size < 1) {
    throw ConfigError("split protocol sizes must be >= 1");
  }
  const std::size_t n = dataset.size();
  const std::size_t v = protocol.validation_size;
  if (n < v * arm_names.size()) {
    throw DataError(fmt::format(
        "insufficient transactions: {} arms need at least {} for validation "
        "blocks, have {}",
        arm_names.size(), v * arm_names.size(), n));
  }
  if (n - v < protocol.train_size) {
    throw DataError(fmt::format(
        "insufficient transactions: train size {} cannot be drawn from the "
        "{} transactions outside a validation block",
        protocol.train_size, n - v));
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng block_rng(derive_seed(seed, "blocks"));
  block_rng.shuffle(order);

  std::vector<std::size_t> block_of(n, arm_names.size());  // sentinel: none
  for (std::size_t a = 0; a < arm_names.size(); ++a) {
    for (std::size_t i = 0; i < v; ++i) {
      block_of[order[a * v + i]] = a;
    }
  }

  std::vector<ArmSplit> splits;
  splits.reserve(arm_names.size());
  for (std::size_t a = 0; a < arm_names.size(); ++a) {
    ArmSplit split;
    split.arm_name = arm_names[a];
    std::vector<std::size_t> pool;
    pool.reserve(n - v);
    for (std::size_t i = 0; i < n; ++i) {
      if (block_of[i] == a) {
        split.validation_ids.push_back(dataset.transactions()[i].id);
      } else {
        pool.push_back(i);
      }
    }
    std::vector<std::size_t> chosen;
    if (pool.size() == protocol.train_size) {
      chosen = pool;
    } else {
      Rng arm_rng(derive_seed(seed, fmt::format("train:{}", arm_names[a])));
      for (std::size_t i = 0; i < protocol.train_size; ++i) {
        const auto pick =
            i + static_cast<std::size_t>(arm_rng.below(pool.size() - i));
        std::swap(pool[i], pool[pick]);
      }
      chosen.assign(pool.begin(),
                    pool.begin() + static_cast<std::ptrdiff_t>(
                                       protocol.train_size));
      std::sort(chosen.begin(), chosen.end());
    }
    split.train_ids.reserve(chosen.size());
    for (const auto i : chosen) {
      split.train_ids.push_back(dataset.transactions()[i].id);
    }
    splits.push_back(std::move(split));
  }
  return splits;
}

// -- distribution check -----------------------------------------------------------

namespace {

double two_sample_ks(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t k = 0;
  double d = 0.0;
  while (i < a.size() || k < b.size()) {
    double x = 0.0;
    if (i < a.size() && k < b.size()) {
      x = std::min(a[i], b[k]);
    } else if (i < a.size()) {
      x = a[i];
    } else {
      x = b[k];
    }
    while (i < a.size() && a[i] == x) {
      ++i;
    }
    while (k < b.size() && b[k] == x) {
      ++k;
    }
    d = std::max(d, std::abs(static_cast<double>(i) / na -
                             static_cast<double>(k) / nb));
  }
  return d;
}

}  // namespace

DivergenceReport distribution_check(std::span<const std::string> a,
                                    std::span<const std::string> b,
                                    const Dataset& dataset) {
  if (a.empty() || b.empty()) {
    throw DataError("distribution_check: both id sets must be non-empty");
  }
  const auto resolve = [&](std::span<const std::string> ids) {
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
      const auto idx = dataset.index_of(id);
      if (!idx) {
        throw DataError(fmt::format("unknown transaction id '{}'", id));
      }
      out.push_back(*idx);
    }
    return out;
  };
  const auto ia = resolve(a);
  const auto ib = resolve(b);

  DivergenceReport report;
  report.ks_by_feature.resize(dataset.d());
  for (std::size_t j = 0; j < dataset.d(); ++j) {
    std::vector<double> va;
    std::vector<double> vb;
    va.reserve(ia.size());
    vb.reserve(ib.size());
    for (const auto i : ia) {
      va.push_back(dataset.transactions()[i].features[j]);
    }
    for (const auto i : ib) {
      vb.push_back(dataset.transactions()[i].features[j]);
    }
    const double d = two_sample_ks(std::move(va), std::move(vb));
    report.ks_by_feature[j] = d;
    if (d > report.max_ks) {
      report.max_ks = d;
      report.argmax_feature = j;
    }
  }
  return report;
}

// -- analyst -----------------------------------------------------------------------

std::string_view to_string(AnalystDecision d) {
  switch (d) {
    case AnalystDecision::approved:
      return "approved";
    case AnalystDecision::declined:
      return "declined";
    case AnalystDecision::suspicious:
      return "suspicious";
  }
  throw ComputeError("invalid analyst decision");
}

AnalystDecision parse_analyst_decision(std::string_view s) {
  if (s == "approved") {
    return AnalystDecision::approved;
  }
  if (s == "declined") {
    return AnalystDecision::declined;
  }
  if (s == "suspicious") {
    return AnalystDecision::suspicious;
  }
  throw DataError(fmt::format("unknown analyst decision '{}'", s));
}

void AnalystLog::add(std::string id, AnalystDecision decision) {
  if (!index_.emplace(id, entries_.size()).second) {
    throw DataError(fmt::format("duplicate analyst decision for id '{}'", id));
  }
  entries_.emplace_back(std::move(id), decision);
}

std::optional<AnalystDecision> AnalystLog::decision_for(
    const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) {
    return std::nullopt;
  }
  return entries_[it->second].second;
}

AnalystLog simulate_analyst(const Dataset& dataset, const AnalystModel& model,
                            std::uint64_t seed) {
  const auto check = [](double p, std::string_view what) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ConfigError(fmt::format("{} must be in [0,1]", what));
    }
  };
  check(model.error_rate_fraud, "error_rate_fraud");
  check(model.error_rate_legit, "error_rate_legit");
  check(model.suspicious_rate, "suspicious_rate");

  Rng rng(seed);
  AnalystLog log;
  for (const auto& t : dataset.transactions()) {
    const bool fraud = t.label == 1;
    const double err =
        fraud ? model.error_rate_fraud : model.error_rate_legit;
    bool declines = fraud;
    if (rng.bernoulli(err)) {
      declines = !declines;
    }
    AnalystDecision d =
        declines ? AnalystDecision::declined : AnalystDecision::approved;
    if (d == AnalystDecision::declined && rng.bernoulli(model.suspicious_rate)) {
      d = AnalystDecision::suspicious;
    }
    log.add(t.id, d);
  }
  return log;
}

AnalystLog load_analyst_log(const std::filesystem::path& path,
                            const Dataset& dataset) {
  const auto lines = file_lines(read_file(path));
  if (lines.empty() || lines[0] != "id,decision") {
    throw DataError(
        fmt::format("{}: bad header: expected 'id,decision'", path.string()));
  }
  AnalystLog log;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split_line(lines[i]);
    if (cells.size() != 2) {
      throw DataError(fmt::format("{}: row {}: expected 2 fields, got {}",
                                  path.string(), i, cells.size()));
    }
    const std::string id(cells[0]);
    if (!dataset.index_of(id)) {
      throw DataError(fmt::format("{}: row {}: id '{}' not in dataset",
                                  path.string(), i, id));
    }
    try {
      log.add(id, parse_analyst_decision(cells[1]));
    } catch (const DataError& e) {
      throw DataError(
          fmt::format("{}: row {}: {}", path.string(), i, e.what()));
    }
  }
  return log;
}

void save_analyst_log(const AnalystLog& log,
                      const std::filesystem::path& path) {
  std::string out = "id,decision\n";
  for (const auto& [id, decision] : log.entries()) {
    require_no_comma(id, "transaction id");
    out += id;
    out += ',';
    out += to_string(decision);
    out += '\n';
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw DataError(fmt::format("cannot write file: {}", path.string()));
  }
  file << out;
}

}  // namespace simeval
