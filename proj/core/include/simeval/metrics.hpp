#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simeval/common.hpp"
#include "simeval/data.hpp"
#include "simeval/explain.hpp"

namespace simeval {

/// Substitute revenue model behind the percent-dollar-regret metric:
/// realized = approved-legit revenue - lambda * approved-fraud amounts,
/// possible = total legit revenue.
struct PdrParams {
  double chargeback_multiplier = 1.0;  // lambda >= 0
};

/// PDR = 1 - realized / possible. Perfect decisions give 0, declining
/// everything gives 1. `decline[i] != 0` means transaction i is declined.
double pdr(std::span<const std::uint8_t> decline, std::span<const int> labels,
           std::span<const double> amounts, const PdrParams& params = {});

struct CI {
  double lo = 0.0;
  double hi = 0.0;
  double alpha = 0.10;
  std::size_t b = 0;
};

struct BootstrapParams {
  std::size_t b = 2000;
  double alpha = 0.10;
  std::uint64_t seed = 0;
};

/// Pivotal bootstrap interval (2*theta - q_{1-alpha/2}, 2*theta - q_{alpha/2})
/// over B seeded resamples of {0..n-1} with replacement. The statistic
/// receives resampled index multisets; quantiles interpolate linearly
/// between order statistics. Bounds are stored unclamped.
CI bootstrap_pivotal_ci(
    const std::function<double(std::span<const std::size_t>)>& statistic,
    std::size_t n, const BootstrapParams& params);

/// Linear-interpolation quantile of an ascending-sorted sample at p in [0,1].
double quantile_linear(std::span<const double> sorted, double p);

/// Exact Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie) over all
/// pairs. Requires both classes present.
double roc_auc(std::span<const double> scores, std::span<const int> targets);

/// declined or suspicious counts as a fraud prediction.
int analyst_predicts_fraud(AnalystDecision d);

struct AssociationResult {
  double auc_simeval = 0.0;
  double auc_original = 0.0;
  std::size_t n = 0;
};

/// ROC AUC of proxy scores and of the original model score against the
/// binarized analyst decision, on the same transactions.
AssociationResult analyst_association(std::span<const double> proxy_scores,
                                      std::span<const double> yhat,
                                      std::span<const AnalystDecision> decisions);

struct ConfusionCell {
  std::size_t n = 0;
  std::optional<double> fraud_fraction;  // unset when n == 0
};

/// Cells indexed by [proxy declines 0/1][approved, declined, suspicious].
struct DecisionConfusion {
  ConfusionCell cells[2][3];
};

DecisionConfusion confusion_by_decision(
    std::span<const std::uint8_t> proxy_decline,
    std::span<const AnalystDecision> decisions, std::span<const int> labels);

enum class ConceptClass { fraudulent, legitimate };

std::string_view to_string(ConceptClass c);
ConceptClass parse_concept_class(std::string_view s);

/// One analyst's 0-4 importance scores per (feature, reason); every reason is
/// classified as a fraudulent or legitimate concept. Unscored pairs read 0.
struct AnalystScoreSheet {
  std::string analyst_id;
  std::map<std::pair<std::size_t, std::string>, int> scores;
  std::map<std::string, ConceptClass> reason_class;

  int score(std::size_t feature, const std::string& reason) const;
};

struct TransactionReasons {
  std::map<std::string, std::vector<std::string>> by_id;

  const std::vector<std::string>& for_id(const std::string& id) const;
};

/// How a transaction with several labeled reasons is scored: the reason max
/// taken per (analyst, transaction, feature), or one reason chosen per
/// (analyst, transaction) by its mean score over the explained features.
enum class ReasonAggregation { per_feature_max, per_transaction_max };

struct AlignmentResult {
  double avg_fa = 0.0;
  CI ci;
  std::size_t n_transactions = 0;
};

/// Average analyst-assigned importance of the features each explanation
/// selects, restricted to reasons of the filtered concept class; transactions
/// without such a reason are excluded. The per-transaction average divides by
/// the actual nonzero count and the number of analysts; the CI bootstraps
/// over transactions.
AlignmentResult avg_feature_alignment(
    const ExplanationSet& explanations,
    const std::vector<AnalystScoreSheet>& sheets,
    const TransactionReasons& reasons, ConceptClass filter,
    const BootstrapParams& bootstrap,
    ReasonAggregation aggregation = ReasonAggregation::per_feature_max);

struct RepetitivenessStats {
  std::vector<double> nonzero_proportion;  // p_i per feature
  double variance = 0.0;                   // population variance over p
  std::size_t unique_feature_count = 0;    // #{i : p_i > 0}
};

RepetitivenessStats repetitiveness_stats(std::span<const Explanation> explanations,
                                         std::size_t d);

// score sheet file: `analyst_id,feature_index,reason_id,concept_class,score`
std::vector<AnalystScoreSheet> load_score_sheets(
    const std::filesystem::path& path);
void save_score_sheets(const std::vector<AnalystScoreSheet>& sheets,
                       const std::filesystem::path& path);

// reasons file: `transaction_id,reason_id`
TransactionReasons load_transaction_reasons(const std::filesystem::path& path);
void save_transaction_reasons(const TransactionReasons& reasons,
                              const std::filesystem::path& path);

}  // namespace simeval
