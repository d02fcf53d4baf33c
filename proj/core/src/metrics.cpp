#include "simeval/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

namespace simeval {

namespace {

void check_aligned(std::size_t a, std::size_t b, std::string_view what) {
  if (a != b) {
    throw ComputeError(
        fmt::format("{}: vectors not aligned ({} vs {})", what, a, b));
  }
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError(fmt::format("cannot open file: {}", path.string()));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string content = buf.str();
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < content.size()) {
    const std::size_t pos = content.find('\n', start);
    const std::size_t stop = pos == std::string::npos ? content.size() : pos;
    std::string line = content.substr(start, stop - start);
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (!line.empty()) {
      lines.push_back(std::move(line));
    }
    start = stop + 1;
  }
  return lines;
}

std::vector<std::string_view> split_cells(std::string_view line) {
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

long long parse_int_cell(std::string_view cell, const std::string& what) {
  long long value = 0;
  const auto* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw DataError(fmt::format("{}: bad integer '{}'", what, cell));
  }
  return value;
}

}  // namespace

// -- PDR ------------------------------------------------------------------------

double pdr(std::span<const std::uint8_t> decline, std::span<const int> labels,
           std::span<const double> amounts, const PdrParams& params) {
  check_aligned(decline.size(), labels.size(), "pdr");
  check_aligned(decline.size(), amounts.size(), "pdr");
  if (!(params.chargeback_multiplier >= 0.0)) {
    throw ConfigError("pdr: chargeback_multiplier must be >= 0");
  }
  double possible = 0.0;
  double approved_legit = 0.0;
  double approved_fraud = 0.0;
  for (std::size_t i = 0; i < decline.size(); ++i) {
    if (labels[i] == 0) {
      possible += amounts[i];
      if (!decline[i]) {
        approved_legit += amounts[i];
      }
    } else if (!decline[i]) {
      approved_fraud += amounts[i];
    }
  }
  if (possible <= 0.0) {
    throw ComputeError("pdr: possible revenue is zero (no legit transactions)");
  }
  const double realized =
      approved_legit - params.chargeback_multiplier * approved_fraud;
  return 1.0 - realized / possible;
}

// -- bootstrap --------------------------------------------------------------------

double quantile_linear(std::span<const double> sorted, double p) {
  if (sorted.empty()) {
    throw ComputeError("quantile of an empty sample");
  }
  if (p <= 0.0) {
    return sorted.front();
  }
  if (p >= 1.0) {
    return sorted.back();
  }
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) {
    return sorted.back();
  }
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

CI bootstrap_pivotal_ci(
    const std::function<double(std::span<const std::size_t>)>& statistic,
    std::size_t n, const BootstrapParams& params) {
  if (params.b < 100) {
    throw ConfigError("bootstrap: B must be >= 100");
  }
  if (n == 0) {
    throw ComputeError("bootstrap: empty sample");
  }
  if (!(params.alpha > 0.0 && params.alpha < 1.0)) {
    throw ConfigError("bootstrap: alpha must be in (0,1)");
  }

  std::vector<std::size_t> identity(n);
  std::iota(identity.begin(), identity.end(), 0);
  const double theta = statistic(identity);

  std::vector<double> replicates(params.b, 0.0);
  std::vector<std::size_t> sample(n);
  for (std::size_t b = 0; b < params.b; ++b) {
    Rng rng(derive_seed(params.seed, "replicate", b));
    for (std::size_t i = 0; i < n; ++i) {
      sample[i] = static_cast<std::size_t>(rng.below(n));
    }
    try {
      replicates[b] = statistic(sample);
    } catch (const Error& e) {
      throw ComputeError(
          fmt::format("bootstrap replicate {} failed: {}", b, e.what()));
    }
  }
  std::sort(replicates.begin(), replicates.end());
  const double q_lo = quantile_linear(replicates, params.alpha / 2.0);
  const double q_hi = quantile_linear(replicates, 1.0 - params.alpha / 2.0);
  return CI{2.0 * theta - q_hi, 2.0 * theta - q_lo, params.alpha, params.b};
}

// -- ROC AUC ---------------------------------------------------------------------

double roc_auc(std::span<const double> scores, std::span<const int> targets) {
  check_aligned(scores.size(), targets.size(), "roc_auc");
  std::size_t n_pos = 0;
  for (const int t : targets) {
    if (t != 0 && t != 1) {
      throw ComputeError("roc_auc: targets must be 0/1");
    }
    n_pos += static_cast<std::size_t>(t);
  }
  const std::size_t n_neg = targets.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw ComputeError("roc_auc: undefined metric, single-class targets");
  }
  double concordant = 0.0;
  double ties = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (targets[i] != 1) {
      continue;
    }
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (targets[j] != 0) {
        continue;
      }
      if (scores[i] > scores[j]) {
        concordant += 1.0;
      } else if (scores[i] == scores[j]) {
        ties += 1.0;
      }
    }
  }
  return (concordant + 0.5 * ties) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

int analyst_predicts_fraud(AnalystDecision d) {
  return d == AnalystDecision::approved ? 0 : 1;
}

AssociationResult analyst_association(
    std::span<const double> proxy_scores, std::span<const double> yhat,
    std::span<const AnalystDecision> decisions) {
  check_aligned(proxy_scores.size(), decisions.size(), "analyst_association");
  check_aligned(yhat.size(), decisions.size(), "analyst_association");
  std::vector<int> targets(decisions.size());
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    targets[i] = analyst_predicts_fraud(decisions[i]);
  }
  AssociationResult result;
  result.auc_simeval = roc_auc(proxy_scores, targets);
  result.auc_original = roc_auc(yhat, targets);
  result.n = decisions.size();
  return result;
}

// -- confusion ---------------------------------------------------------------------

DecisionConfusion confusion_by_decision(
    std::span<const std::uint8_t> proxy_decline,
    std::span<const AnalystDecision> decisions, std::span<const int> labels) {
  check_aligned(proxy_decline.size(), decisions.size(), "confusion_by_decision");
  check_aligned(proxy_decline.size(), labels.size(), "confusion_by_decision");
  std::size_t counts[2][3] = {};
  std::size_t frauds[2][3] = {};
  for (std::size_t i = 0; i < proxy_decline.size(); ++i) {
    const std::size_t row = proxy_decline[i] ? 1 : 0;
    const auto col = static_cast<std::size_t>(decisions[i]);
    counts[row][col] += 1;
    frauds[row][col] += static_cast<std::size_t>(labels[i]);
  }
  DecisionConfusion out;
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      out.cells[r][c].n = counts[r][c];
      if (counts[r][c] > 0) {
        out.cells[r][c].fraud_fraction = static_cast<double>(frauds[r][c]) /
                                         static_cast<double>(counts[r][c]);
      }
    }
  }
  return out;
}

// -- feature alignment ----------------------------------------------------------------

std::string_view to_string(ConceptClass c) {
  return c == ConceptClass::fraudulent ? "fraudulent" : "legitimate";
}

ConceptClass parse_concept_class(std::string_view s) {
  if (s == "fraudulent") {
    return ConceptClass::fraudulent;
  }
  if (s == "legitimate") {
    return ConceptClass::legitimate;
  }
  throw DataError(fmt::format("unknown concept class '{}'", s));
}

int AnalystScoreSheet::score(std::size_t feature,
                             const std::string& reason) const {
  const auto it = scores.find({feature, reason});
  return it == scores.end() ? 0 : it->second;
}

const std::vector<std::string>& TransactionReasons::for_id(
    const std::string& id) const {
  const auto it = by_id.find(id);
  if (it == by_id.end()) {
    throw DataError(fmt::format("no transaction reasons for id '{}'", id));
  }
  return it->second;
}

AlignmentResult avg_feature_alignment(
    const ExplanationSet& explanations,
    const std::vector<AnalystScoreSheet>& sheets,
    const TransactionReasons& reasons, ConceptClass filter,
    const BootstrapParams& bootstrap, ReasonAggregation aggregation) {
  if (sheets.empty()) {
    throw ConfigError("avg_feature_alignment: needs at least one score sheet");
  }
  if (explanations.ids.empty()) {
    throw DataError("avg_feature_alignment: empty explanation set");
  }

  std::vector<double> per_transaction;
  per_transaction.reserve(explanations.ids.size());
  for (std::size_t i = 0; i < explanations.ids.size(); ++i) {
    const auto& id = explanations.ids[i];
    const auto& e = explanations.explanations[i];
    const auto& all_reasons = reasons.for_id(id);

    std::vector<std::string> filtered;
    for (const auto& r : all_reasons) {
      const auto it = sheets.front().reason_class.find(r);
      if (it == sheets.front().reason_class.end()) {
        throw DataError(fmt::format(
            "reason '{}' of transaction '{}' is not classified in the score "
            "sheets",
            r, id));
      }
      if (it->second == filter) {
        filtered.push_back(r);
      }
    }
    if (filtered.empty() || e.entries.empty()) {
      continue;  // no reason in the filtered class / nothing to align
    }

    double total = 0.0;
    for (const auto& sheet : sheets) {
      if (aggregation == ReasonAggregation::per_feature_max) {
        for (const auto& [feature, value] : e.entries) {
          (void)value;
          int best = 0;
          for (const auto& r : filtered) {
            best = std::max(best, sheet.score(feature, r));
          }
          total += static_cast<double>(best);
        }
      } else {
        double best_mean = -1.0;
        for (const auto& r : filtered) {
          double sum = 0.0;
          for (const auto& [feature, value] : e.entries) {
            (void)value;
            sum += static_cast<double>(sheet.score(feature, r));
          }
          best_mean =
              std::max(best_mean, sum / static_cast<double>(e.entries.size()));
        }
        total += best_mean * static_cast<double>(e.entries.size());
      }
    }
    per_transaction.push_back(
        total / (static_cast<double>(e.entries.size()) *
                 static_cast<double>(sheets.size())));
  }

  if (per_transaction.empty()) {
    throw ComputeError(fmt::format(
        "avg_feature_alignment: no transaction has a reason in the '{}' "
        "concept class",
        to_string(filter)));
  }

  const auto mean_of = [&](std::span<const std::size_t> idx) {
    double sum = 0.0;
    for (const auto i : idx) {
      sum += per_transaction[i];
    }
    return sum / static_cast<double>(idx.size());
  };

  AlignmentResult result;
  result.n_transactions = per_transaction.size();
  std::vector<std::size_t> identity(per_transaction.size());
  std::iota(identity.begin(), identity.end(), 0);
  result.avg_fa = mean_of(identity);
  result.ci = bootstrap_pivotal_ci(mean_of, per_transaction.size(), bootstrap);
  return result;
}

// -- repetitiveness ----------------------------------------------------------------------

RepetitivenessStats repetitiveness_stats(
    std::span<const Explanation> explanations, std::size_t d) {
  if (explanations.empty()) {
    throw DataError("repetitiveness_stats: empty explanation set");
  }
  if (d == 0) {
    throw ConfigError("repetitiveness_stats: d must be >= 1");
  }
  std::vector<double> counts(d, 0.0);
  for (const auto& e : explanations) {
    for (const auto& [feature, value] : e.entries) {
      (void)value;
      if (feature >= d) {
        throw DataError(fmt::format(
            "repetitiveness_stats: feature index {} outside d={}", feature,
            d));
      }
      counts[feature] += 1.0;
    }
  }
  RepetitivenessStats stats;
  stats.nonzero_proportion.resize(d);
  const auto n = static_cast<double>(explanations.size());
  double mean = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    stats.nonzero_proportion[j] = counts[j] / n;
    mean += stats.nonzero_proportion[j];
    if (counts[j] > 0.0) {
      ++stats.unique_feature_count;
    }
  }
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (const auto p : stats.nonzero_proportion) {
    const double delta = p - mean;
    var += delta * delta;
  }
  stats.variance = var / static_cast<double>(d);
  return stats;
}

// -- score sheet / reasons files -------------------------------------------------------------

std::vector<AnalystScoreSheet> load_score_sheets(
    const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  const std::string want = "analyst_id,feature_index,reason_id,concept_class,score";
  if (lines.empty() || lines[0] != want) {
    throw DataError(
        fmt::format("{}: bad header: expected '{}'", path.string(), want));
  }
  std::vector<AnalystScoreSheet> sheets;
  std::map<std::string, std::size_t> sheet_index;
  std::map<std::string, ConceptClass> global_class;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fail = [&](const std::string& cause) -> DataError {
      return DataError(fmt::format("{}: row {}: {}", path.string(), i, cause));
    };
    const auto cells = split_cells(lines[i]);
    if (cells.size() != 5) {
      throw fail(fmt::format("expected 5 fields, got {}", cells.size()));
    }
    const std::string analyst(cells[0]);
    const std::string reason(cells[2]);
    if (analyst.empty() || reason.empty()) {
      throw fail("empty analyst_id or reason_id");
    }
    long long feature = 0;
    long long score = 0;
    ConceptClass cls;
    try {
      feature = parse_int_cell(cells[1], "feature_index");
      cls = parse_concept_class(cells[3]);
      score = parse_int_cell(cells[4], "score");
    } catch (const DataError& e) {
      throw fail(e.what());
    }
    if (feature < 0) {
      throw fail("feature_index must be >= 0");
    }
    if (score < 0 || score > 4) {
      throw fail(fmt::format("score {} outside 0..4", score));
    }
    const auto [cit, inserted] = global_class.emplace(reason, cls);
    if (!inserted && cit->second != cls) {
      throw fail(fmt::format(
          "reason '{}' classified as both fraudulent and legitimate", reason));
    }

    auto [sit, fresh] = sheet_index.emplace(analyst, sheets.size());
    if (fresh) {
      sheets.emplace_back();
      sheets.back().analyst_id = analyst;
    }
    auto& sheet = sheets[sit->second];
    const auto key = std::make_pair(static_cast<std::size_t>(feature), reason);
    if (!sheet.scores.emplace(key, static_cast<int>(score)).second) {
      throw fail(fmt::format(
          "duplicate score for analyst '{}', feature {}, reason '{}'", analyst,
          feature, reason));
    }
  }
  if (sheets.empty()) {
    throw DataError(fmt::format("{}: no score rows", path.string()));
  }
  // Every sheet sees the full reason classification.
  for (auto& sheet : sheets) {
    sheet.reason_class = global_class;
  }
  return sheets;
}

void save_score_sheets(const std::vector<AnalystScoreSheet>& sheets,
                       const std::filesystem::path& path) {
  std::string out = "analyst_id,feature_index,reason_id,concept_class,score\n";
  for (const auto& sheet : sheets) {
    for (const auto& [key, score] : sheet.scores) {
      const auto it = sheet.reason_class.find(key.second);
      if (it == sheet.reason_class.end()) {
        throw DataError(
            fmt::format("reason '{}' has no concept class", key.second));
      }
      out += fmt::format("{},{},{},{},{}\n", sheet.analyst_id, key.first,
                         key.second, to_string(it->second), score);
    }
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw DataError(fmt::format("cannot write file: {}", path.string()));
  }
  file << out;
}

TransactionReasons load_transaction_reasons(
    const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "transaction_id,reason_id") {
    throw DataError(fmt::format(
        "{}: bad header: expected 'transaction_id,reason_id'", path.string()));
  }
  TransactionReasons reasons;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split_cells(lines[i]);
    if (cells.size() != 2 || cells[0].empty() || cells[1].empty()) {
      throw DataError(fmt::format("{}: row {}: expected 'id,reason'",
                                  path.string(), i));
    }
    auto& list = reasons.by_id[std::string(cells[0])];
    const std::string reason(cells[1]);
    if (std::find(list.begin(), list.end(), reason) != list.end()) {
      throw DataError(fmt::format("{}: row {}: duplicate reason '{}' for '{}'",
                                  path.string(), i, reason, cells[0]));
    }
    list.push_back(reason);
  }
  if (reasons.by_id.empty()) {
    throw DataError(fmt::format("{}: no reason rows", path.string()));
  }
  return reasons;
}

void save_transaction_reasons(const TransactionReasons& reasons,
                              const std::filesystem::path& path) {
  std::string out = "transaction_id,reason_id\n";
  for (const auto& [id, list] : reasons.by_id) {
    for (const auto& reason : list) {
      out += fmt::format("{},{}\n", id, reason);
    }
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw DataError(fmt::format("cannot write file: {}", path.string()));
  }
  file << out;
}

}  // namespace simeval
