#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "simeval/common.hpp"

namespace simeval {

/// Flat-array tree node. `feature < 0` marks a leaf. Every node carries the
/// fraud fraction (node_mean) and count (cover) of the training rows that
/// reached it; both are required by the attribution methods.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  double node_mean = 0.0;
  std::int64_t cover = 0;
  std::int32_t left = -1;
  std::int32_t right = -1;

  bool is_leaf() const { return feature < 0; }
};

enum class ModelFamily { random_forest, decision_tree };

std::string_view to_string(ModelFamily f);
ModelFamily parse_model_family(std::string_view s);

struct Hyperparams {
  ModelFamily family = ModelFamily::random_forest;
  std::size_t min_samples_leaf = 5;
  std::size_t n_trees = 100;  // forests only
  std::size_t max_depth = 0;  // 0 = unlimited
  bool bootstrap = true;      // forests only
  std::uint64_t seed = 0;
};

class DecisionTree {
 public:
  DecisionTree() = default;
  DecisionTree(std::vector<TreeNode> nodes, std::size_t n_features);

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& root() const { return nodes_.front(); }
  std::size_t n_features() const { return n_features_; }

  /// node_mean of the reached leaf; values equal to a threshold go left.
  double predict(std::span<const double> x) const;

 private:
  std::vector<TreeNode> nodes_;
  std::size_t n_features_ = 0;
};

class Forest {
 public:
  Forest() = default;
  Forest(std::vector<DecisionTree> trees, Hyperparams hp);

  const std::vector<DecisionTree>& trees() const { return trees_; }
  std::size_t n_features() const { return n_features_; }
  const Hyperparams& hyperparams() const { return hp_; }

  /// Left-to-right mean of the tree predictions.
  double predict(std::span<const double> x) const;

 private:
  std::vector<DecisionTree> trees_;
  Hyperparams hp_;
  std::size_t n_features_ = 0;
};

using Model = std::variant<DecisionTree, Forest>;

double predict_proba(const Model& model, std::span<const double> x);
std::size_t model_n_features(const Model& model);
/// The trees behind a model (a bare tree is viewed as a forest of one).
std::span<const DecisionTree> trees_of(const Model& model);

/// Training rows. When ids are present, resampling and row ordering are keyed
/// on ids: rows are canonicalized to ascending id order before any seeded
/// draw, so permuting input rows cannot change a fitted model.
struct TrainingSet {
  Matrix x;
  std::vector<int> labels;  // 0/1
  std::vector<std::string> ids;  // optional; empty = positional
};

/// Greedy CART on Gini impurity. Split candidates are midpoints of
/// consecutive distinct sorted feature values; first-best tie-break on
/// (impurity, feature index, threshold).
DecisionTree fit_tree(const TrainingSet& data, const Hyperparams& hp);

/// Seeded bootstrap per tree plus ceil(sqrt(d)) feature subsampling per
/// split.
Forest fit_forest(const TrainingSet& data, const Hyperparams& hp);

/// Dispatches on hp.family.
Model fit_model(const TrainingSet& data, const Hyperparams& hp);

struct GridSpec {
  std::vector<Hyperparams> candidates;
};

/// Table 'random_forest / decision_tree' x min_samples_leaf in
/// {5,10,15,20,25,30}: 12 candidates, each with an independent derived seed.
GridSpec default_grid(std::uint64_t seed, std::size_t n_trees = 100);

struct GridEntry {
  Hyperparams hp;
  double validation_pdr = 0.0;
};

struct GridSearchResult {
  Hyperparams best;
  Model best_model;
  std::vector<GridEntry> table;
};

/// Fits every candidate on `train` and scores it with `validation_objective`
/// (lower is better). Tie-break: lowest score, then fewer trees, then smaller
/// min_samples_leaf. Candidates run concurrently when parallelism > 1; the
/// table is identical to a serial run.
GridSearchResult grid_search(
    const TrainingSet& train, const GridSpec& grid,
    const std::function<double(const Model&)>& validation_objective,
    unsigned parallelism = 1);

// Versioned text serialization; exact round trip.
std::string serialize_model(const Model& model);
Model deserialize_model(std::string_view text);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace simeval
