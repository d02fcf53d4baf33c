#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "simeval/common.hpp"

namespace simeval {

enum class FeatureKind { numeric, categorical };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::numeric;
  std::vector<std::string> categories;  // categorical only, >= 2 entries
};

/// Ordered feature space shared by every transaction of a dataset.
/// Categorical features are integer-encoded: the stored feature value is the
/// index of the category in `categories`.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FeatureSpec> features);

  /// All-numeric schema with names f0..f{d-1}.
  static FeatureSchema numeric(std::size_t d);
  static FeatureSchema numeric(std::vector<std::string> names);

  std::size_t d() const { return features_.size(); }
  const FeatureSpec& feature(std::size_t j) const { return features_.at(j); }
  const std::vector<FeatureSpec>& features() const { return features_; }
  std::optional<std::size_t> index_of(std::string_view name) const;

  /// Text cell -> encoded feature value. Throws DataError on an unknown
  /// category or an unparsable number.
  double encode(std::size_t j, std::string_view cell) const;
  /// Encoded feature value -> text cell.
  std::string decode(std::size_t j, double value) const;

  bool operator==(const FeatureSchema& other) const;

 private:
  std::vector<FeatureSpec> features_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Transaction {
  std::string id;
  std::vector<double> features;
  double amount = 0.0;  // strictly positive
  int label = 0;        // 1 = fraud
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(FeatureSchema schema, std::vector<Transaction> transactions);

  const FeatureSchema& schema() const { return schema_; }
  const std::vector<Transaction>& transactions() const { return transactions_; }
  std::size_t size() const { return transactions_.size(); }
  std::size_t d() const { return schema_.d(); }

  std::optional<std::size_t> index_of(const std::string& id) const;
  const Transaction& by_id(const std::string& id) const;

  /// Transactions [begin, end) as a new Dataset sharing the schema.
  Dataset slice(std::size_t begin, std::size_t end) const;
  /// Transactions with the given ids, in the given order.
  Dataset subset(std::span<const std::string> ids) const;

 private:
  FeatureSchema schema_;
  std::vector<Transaction> transactions_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// One experimental arm's train/validation id sets. Ids are stored in
/// dataset order; train and validation never intersect.
struct ArmSplit {
  std::string arm_name;
  std::vector<std::string> train_ids;
  std::vector<std::string> validation_ids;
};

struct SplitProtocol {
  std::size_t train_size = 1000;
  std::size_t validation_size = 500;
};

/// Planted labelling rule: label = [sum_i weights[i] * x[features[i]] >
/// threshold], optionally redrawn at the base rate with probability `noise`.
/// When `threshold` is unset it is calibrated in-sample so that the rule
/// fires on a fraud_rate fraction of rows.
struct SignalSpec {
  std::vector<std::size_t> features;
  std::vector<double> weights;  // empty -> all ones
  std::optional<double> threshold;
  double noise = 0.0;
};

struct AmountModel {
  double mu_log = 4.0;
  double sigma_log = 1.0;
};

struct SyntheticConfig {
  std::size_t d = 112;
  std::size_t n = 0;
  double fraud_rate = 0.15;
  SignalSpec signal;
  AmountModel amount;
  std::uint64_t seed = 0;
};

enum class AnalystDecision { approved, declined, suspicious };

std::string_view to_string(AnalystDecision d);
AnalystDecision parse_analyst_decision(std::string_view s);

/// Per-transaction analyst decisions; exactly one decision per id.
class AnalystLog {
 public:
  void add(std::string id, AnalystDecision decision);
  std::optional<AnalystDecision> decision_for(const std::string& id) const;
  const std::vector<std::pair<std::string, AnalystDecision>>& entries() const {
    return entries_;
  }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<std::pair<std::string, AnalystDecision>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AnalystModel {
  double error_rate_fraud = 0.0;   // P(fraud approved)
  double error_rate_legit = 0.0;   // P(legit declined)
  double suspicious_rate = 0.0;    // P(declined reported as suspicious)
};

struct DivergenceReport {
  std::vector<double> ks_by_feature;
  double max_ks = 0.0;
  std::size_t argmax_feature = 0;
};

// -- operations --------------------------------------------------------------

/// Reads a delimited transactions file (header `id,amount,label,f0,...`).
/// Errors name the offending data row (1-based, header excluded).
Dataset load_transactions(const std::filesystem::path& path,
                          const FeatureSchema& schema);
/// Same, deriving an all-numeric schema from the file header.
Dataset load_transactions(const std::filesystem::path& path);
void save_transactions(const Dataset& dataset,
                       const std::filesystem::path& path);

Dataset generate_synthetic(const SyntheticConfig& cfg);

/// Partitions the dataset into one validation block per arm (seeded shuffle,
/// consecutive blocks) and draws each arm's train set without replacement
/// from everything outside that arm's block.
std::vector<ArmSplit> make_arm_splits(const Dataset& dataset,
                                      std::span<const std::string> arm_names,
                                      std::uint64_t seed,
                                      const SplitProtocol& protocol = {});

/// Per-feature two-sample Kolmogorov-Smirnov statistics between two id sets.
DivergenceReport distribution_check(std::span<const std::string> a,
                                    std::span<const std::string> b,
                                    const Dataset& dataset);

AnalystLog simulate_analyst(const Dataset& dataset, const AnalystModel& model,
                            std::uint64_t seed);

AnalystLog load_analyst_log(const std::filesystem::path& path,
                            const Dataset& dataset);
void save_analyst_log(const AnalystLog& log,
                      const std::filesystem::path& path);

}  // namespace simeval
