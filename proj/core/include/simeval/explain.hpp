#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "simeval/data.hpp"
#include "simeval/tree.hpp"

namespace simeval {

enum class ExplainerKind { tree_interpreter, tree_shap, lime };

std::string_view to_string(ExplainerKind k);
ExplainerKind parse_explainer(std::string_view s);

/// Dense per-feature attribution of one prediction. For tree_interpreter and
/// tree_shap, base_value + sum(contributions) equals the model prediction;
/// lime carries its surrogate intercept as base_value with no such identity.
struct Attribution {
  std::vector<double> contributions;
  double base_value = 0.0;
  ExplainerKind explainer = ExplainerKind::tree_interpreter;
};

/// Top-K sparsification of an Attribution: at most k nonzeros, which are the
/// k largest-|magnitude| entries (ties broken by lower index), values kept
/// exactly.
struct Explanation {
  std::size_t d = 0;
  std::size_t k = 6;
  ExplainerKind explainer = ExplainerKind::tree_interpreter;
  double base_value = 0.0;
  std::vector<std::pair<std::size_t, double>> entries;  // ascending index

  std::vector<double> dense() const;
};

/// Saabas path decomposition: each split attributes the change in node mean
/// to its split feature; forest attributions are means over trees.
Attribution tree_interpreter(const Model& model, std::span<const double> x);

/// Path-dependent TreeSHAP: exact Shapley values of the cover-weighted
/// conditional expectation of each tree, computed per leaf in polynomial
/// time; forest result is the mean over trees.
Attribution tree_shap(const Model& model, std::span<const double> x);

/// Exact Shapley values by subset enumeration of the interventional value
/// function v(S) = mean over background rows b of predict(x_S combined with
/// b outside S). Requires d <= 15.
Attribution brute_force_shapley(const Model& model, std::span<const double> x,
                                const Dataset& background);

/// Exact Shapley values by subset enumeration of the cover-weighted
/// conditional value function used by tree_shap. Independent oracle for the
/// polynomial algorithm. Requires d <= 15.
Attribution brute_force_shapley_conditional(const Model& model,
                                            std::span<const double> x);

struct LimeConfig {
  std::size_t n_samples = 5000;
  double kernel_width = 0.0;  // <= 0: defaults to 0.75 * sqrt(d)
  double ridge_penalty = 1.0;
  std::uint64_t seed = 0;
};

/// Per-feature sampling statistics of the training data, used to draw and
/// standardize LIME perturbations.
struct TrainStats {
  std::vector<FeatureKind> kinds;
  std::vector<double> mean;    // numeric features
  std::vector<double> stddev;  // numeric features (population)
  std::vector<std::vector<double>> category_freq;  // categorical features

  static TrainStats from(const Dataset& dataset);
  std::size_t d() const { return kinds.size(); }
};

/// Local surrogate: perturbations standard-normal in standardized space
/// (categoricals resampled from training frequencies), weighted by
/// exp(-D^2 / kernel_width^2) with D the standardized Euclidean distance to
/// x, then a weighted ridge regression of model outputs on the standardized
/// perturbations. Contributions are the fitted coefficients.
Attribution lime_explain(
    const std::function<double(std::span<const double>)>& model,
    std::span<const double> x, const TrainStats& stats, const LimeConfig& cfg);

Explanation sparsify_topk(const Attribution& attribution, std::size_t k);

/// Explanations for a list of transactions, all from one explainer at one
/// sparsity level.
struct ExplanationSet {
  ExplainerKind explainer = ExplainerKind::tree_interpreter;
  std::size_t d = 0;
  std::size_t k = 6;
  std::vector<std::string> ids;
  std::vector<Explanation> explanations;  // aligned with ids

  const Explanation* find(const std::string& id) const;
  void add(std::string id, Explanation explanation);

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

// Explanations file: header `id,explainer,base_value,j0,v0,...,j{K-1},v{K-1}`
// with index -1 padding rows that have fewer than K nonzeros.
void save_explanations(const ExplanationSet& set,
                       const std::filesystem::path& path);
ExplanationSet load_explanations(const std::filesystem::path& path,
                                 std::size_t d_hint = 0);

}  // namespace simeval
