#include "simeval/explain.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <fmt/format.h>

namespace simeval {

namespace {

constexpr std::size_t kBruteForceFeatureLimit = 15;
constexpr std::size_t kMaxPathFeatures = 160;  // factorial table bound

const std::vector<double>& factorials() {
  static const std::vector<double> table = [] {
    std::vector<double> f(kMaxPathFeatures + 1, 1.0);
    for (std::size_t i = 1; i < f.size(); ++i) {
      f[i] = f[i - 1] * static_cast<double>(i);
    }
    return f;
  }();
  return table;
}

void check_dimension(const Model& model, std::span<const double> x) {
  if (x.size() != model_n_features(model)) {
    throw ComputeError(fmt::format(
        "dimension mismatch: input has {} features, model expects {}",
        x.size(), model_n_features(model)));
  }
}

void check_node_stats(const DecisionTree& tree) {
  if (tree.root().cover <= 0) {
    throw ComputeError("explainer error: missing node statistics (zero cover "
                       "at root)");
  }
}

// -- path-dependent TreeSHAP ---------------------------------------------------

// Along the path to a leaf every unique split feature j carries a hot factor
// (1 when x satisfies all of j's splits on the path, else 0) and a cold
// factor (product of the cover ratios of j's edges). The leaf's weight in the
// conditional value function v(S) is then prod_j (j in S ? hot_j : cold_j),
// which makes v multilinear per leaf; exact Shapley values follow from the
// coefficients of prod_j (cold_j + hot_j z).
struct ShapPathEntry {
  std::int32_t feature = -1;
  double hot = 1.0;
  double cold = 1.0;
};

class TreeShapWalker {
 public:
  TreeShapWalker(const DecisionTree& tree, std::span<const double> x,
                 std::span<double> phi, double& base)
      : tree_(tree), x_(x), phi_(phi), base_(base) {
    position_of_.assign(tree.n_features(), -1);
  }

  void run() { visit(0); }

 private:
  void visit(std::int32_t node_id) {
    const TreeNode& node = tree_.nodes()[static_cast<std::size_t>(node_id)];
    if (node.is_leaf()) {
      accumulate_leaf(node.node_mean);
      return;
    }
    if (node.cover <= 0) {
      throw ComputeError("tree_shap: zero-cover node");
    }
    const TreeNode& left = tree_.nodes()[static_cast<std::size_t>(node.left)];
    const TreeNode& right =
        tree_.nodes()[static_cast<std::size_t>(node.right)];
    if (left.cover <= 0 || right.cover <= 0) {
      throw ComputeError("tree_shap: zero-cover node");
    }
    const bool goes_left =
        x_[static_cast<std::size_t>(node.feature)] <= node.threshold;
    descend(node.feature, goes_left ? 1.0 : 0.0,
            static_cast<double>(left.cover) / static_cast<double>(node.cover),
            node.left);
    descend(node.feature, goes_left ? 0.0 : 1.0,
            static_cast<double>(right.cover) / static_cast<double>(node.cover),
            node.right);
  }

  void descend(std::int32_t feature, double edge_hot, double edge_cold,
               std::int32_t child) {
    const int pos = position_of_[static_cast<std::size_t>(feature)];
    if (pos < 0) {
      position_of_[static_cast<std::size_t>(feature)] =
          static_cast<int>(path_.size());
      path_.push_back({feature, edge_hot, edge_cold});
      visit(child);
      path_.pop_back();
      position_of_[static_cast<std::size_t>(feature)] = -1;
    } else {
      const ShapPathEntry saved = path_[static_cast<std::size_t>(pos)];
      path_[static_cast<std::size_t>(pos)].hot *= edge_hot;
      path_[static_cast<std::size_t>(pos)].cold *= edge_cold;
      visit(child);
      path_[static_cast<std::size_t>(pos)] = saved;
    }
  }

  void accumulate_leaf(double leaf_value) {
    const std::size_t m = path_.size();
    if (m > kMaxPathFeatures) {
      throw ComputeError("tree_shap: path too deep");
    }
    poly_.assign(m + 1, 0.0);
    poly_[0] = 1.0;
    std::size_t degree = 0;
    for (const auto& e : path_) {
      for (std::size_t k = degree + 1; k >= 1; --k) {
        poly_[k] = poly_[k] * e.cold + poly_[k - 1] * e.hot;
      }
      poly_[0] *= e.cold;
      ++degree;
    }
    base_ += leaf_value * poly_[0];
    if (m == 0) {
      return;
    }
    const auto& fact = factorials();
    quotient_.assign(m, 0.0);
    for (const auto& e : path_) {
      if (e.hot != 0.0) {
        quotient_[m - 1] = poly_[m] / e.hot;
        for (std::size_t k = m - 1; k >= 1; --k) {
          quotient_[k - 1] = (poly_[k] - e.cold * quotient_[k]) / e.hot;
        }
      } else {
        for (std::size_t k = 0; k < m; ++k) {
          quotient_[k] = poly_[k] / e.cold;
        }
      }
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        s += fact[k] * fact[m - 1 - k] / fact[m] * quotient_[k];
      }
      phi_[static_cast<std::size_t>(e.feature)] +=
          leaf_value * (e.hot - e.cold) * s;
    }
  }

  const DecisionTree& tree_;
  std::span<const double> x_;
  std::span<double> phi_;
  double& base_;
  std::vector<ShapPathEntry> path_;
  std::vector<int> position_of_;
  std::vector<double> poly_;
  std::vector<double> quotient_;
};

// -- Shapley values from a tabulated value function ----------------------------

Attribution shapley_from_values(const std::vector<double>& v, std::size_t d,
                                ExplainerKind tag) {
  const auto& fact = factorials();
  Attribution out;
  out.explainer = tag;
  out.base_value = v[0];
  out.contributions.assign(d, 0.0);
  const std::size_t full = std::size_t{1} << d;
  for (std::size_t mask = 0; mask < full; ++mask) {
    const auto k = static_cast<std::size_t>(std::popcount(mask));
    for (std::size_t i = 0; i < d; ++i) {
      if (mask & (std::size_t{1} << i)) {
        continue;
      }
      const double w = fact[k] * fact[d - k - 1] / fact[d];
      out.contributions[i] += w * (v[mask | (std::size_t{1} << i)] - v[mask]);
    }
  }
  return out;
}

double conditional_expectation(const DecisionTree& tree, std::int32_t node_id,
                               std::size_t mask, std::span<const double> x) {
  const TreeNode& node = tree.nodes()[static_cast<std::size_t>(node_id)];
  if (node.is_leaf()) {
    return node.node_mean;
  }
  if (node.cover <= 0) {
    throw ComputeError("brute-force Shapley: zero-cover node");
  }
  if (mask & (std::size_t{1} << static_cast<std::size_t>(node.feature))) {
    const bool goes_left =
        x[static_cast<std::size_t>(node.feature)] <= node.threshold;
    return conditional_expectation(tree, goes_left ? node.left : node.right,
                                   mask, x);
  }
  const TreeNode& left = tree.nodes()[static_cast<std::size_t>(node.left)];
  const TreeNode& right = tree.nodes()[static_cast<std::size_t>(node.right)];
  return (static_cast<double>(left.cover) *
              conditional_expectation(tree, node.left, mask, x) +
          static_cast<double>(right.cover) *
              conditional_expectation(tree, node.right, mask, x)) /
         static_cast<double>(node.cover);
}

void check_brute_force_dimension(std::size_t d) {
  if (d > kBruteForceFeatureLimit) {
    throw ComputeError(fmt::format(
        "brute-force Shapley supports at most {} features, got {}",
        kBruteForceFeatureLimit, d));
  }
}

}  // namespace

// -- public explainers ----------------------------------------------------------

std::string_view to_string(ExplainerKind k) {
  switch (k) {
    case ExplainerKind::tree_interpreter:
      return "tree_interpreter";
    case ExplainerKind::tree_shap:
      return "tree_shap";
    case ExplainerKind::lime:
      return "lime";
  }
  throw ComputeError("invalid explainer kind");
}

ExplainerKind parse_explainer(std::string_view s) {
  if (s == "tree_interpreter") {
    return ExplainerKind::tree_interpreter;
  }
  if (s == "tree_shap") {
    return ExplainerKind::tree_shap;
  }
  if (s == "lime") {
    return ExplainerKind::lime;
  }
  throw ConfigError(fmt::format("unknown explainer '{}'", s));
}

std::vector<double> Explanation::dense() const {
  std::vector<double> out(d, 0.0);
  for (const auto& [j, v] : entries) {
    out.at(j) = v;
  }
  return out;
}

Attribution tree_interpreter(const Model& model, std::span<const double> x) {
  check_dimension(model, x);
  const auto trees = trees_of(model);
  Attribution out;
  out.explainer = ExplainerKind::tree_interpreter;
  out.contributions.assign(x.size(), 0.0);
  for (const auto& tree : trees) {
    check_node_stats(tree);
    const TreeNode* node = &tree.root();
    out.base_value += node->node_mean;
    while (!node->is_leaf()) {
      const TreeNode* next =
          x[static_cast<std::size_t>(node->feature)] <= node->threshold
              ? &tree.nodes()[static_cast<std::size_t>(node->left)]
              : &tree.nodes()[static_cast<std::size_t>(node->right)];
      out.contributions[static_cast<std::size_t>(node->feature)] +=
          next->node_mean - node->node_mean;
      node = next;
    }
  }
  const auto n = static_cast<double>(trees.size());
  for (auto& c : out.contributions) {
    c /= n;
  }
  out.base_value /= n;
  return out;
}

Attribution tree_shap(const Model& model, std::span<const double> x) {
  check_dimension(model, x);
  const auto trees = trees_of(model);
  Attribution out;
  out.explainer = ExplainerKind::tree_shap;
  out.contributions.assign(x.size(), 0.0);
  for (const auto& tree : trees) {
    check_node_stats(tree);
    TreeShapWalker walker(tree, x, out.contributions, out.base_value);
    walker.run();
  }
  const auto n = static_cast<double>(trees.size());
  for (auto& c : out.contributions) {
    c /= n;
  }
  out.base_value /= n;
  return out;
}

Attribution brute_force_shapley(const Model& model, std::span<const double> x,
                                const Dataset& background) {
  check_dimension(model, x);
  const std::size_t d = x.size();
  check_brute_force_dimension(d);
  if (background.size() == 0) {
    throw DataError("brute-force Shapley: background dataset is empty");
  }
  if (background.d() != d) {
    throw DataError("brute-force Shapley: background schema mismatch");
  }

  const std::size_t full = std::size_t{1} << d;
  std::vector<double> v(full, 0.0);
  std::vector<double> blended(d, 0.0);
  for (std::size_t mask = 0; mask < full; ++mask) {
    double sum = 0.0;
    for (const auto& row : background.transactions()) {
      for (std::size_t j = 0; j < d; ++j) {
        blended[j] =
            (mask & (std::size_t{1} << j)) ? x[j] : row.features[j];
      }
      sum += predict_proba(model, blended);
    }
    v[mask] = sum / static_cast<double>(background.size());
  }
  return shapley_from_values(v, d, ExplainerKind::tree_shap);
}

Attribution brute_force_shapley_conditional(const Model& model,
                                            std::span<const double> x) {
  check_dimension(model, x);
  const std::size_t d = x.size();
  check_brute_force_dimension(d);
  const auto trees = trees_of(model);

  const std::size_t full = std::size_t{1} << d;
  std::vector<double> v(full, 0.0);
  for (std::size_t mask = 0; mask < full; ++mask) {
    double sum = 0.0;
    for (const auto& tree : trees) {
      sum += conditional_expectation(tree, 0, mask, x);
    }
    v[mask] = sum / static_cast<double>(trees.size());
  }
  return shapley_from_values(v, d, ExplainerKind::tree_shap);
}

// -- LIME ---------------------------------------------------------------------------

TrainStats TrainStats::from(const Dataset& dataset) {
  if (dataset.size() == 0) {
    throw DataError("train stats need a non-empty dataset");
  }
  const std::size_t d = dataset.d();
  const auto n = static_cast<double>(dataset.size());
  TrainStats stats;
  stats.kinds.resize(d);
  stats.mean.assign(d, 0.0);
  stats.stddev.assign(d, 0.0);
  stats.category_freq.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const auto& spec = dataset.schema().feature(j);
    stats.kinds[j] = spec.kind;
    if (spec.kind == FeatureKind::numeric) {
      double mean = 0.0;
      for (const auto& t : dataset.transactions()) {
        mean += t.features[j];
      }
      mean /= n;
      double var = 0.0;
      for (const auto& t : dataset.transactions()) {
        const double delta = t.features[j] - mean;
        var += delta * delta;
      }
      stats.mean[j] = mean;
      stats.stddev[j] = std::sqrt(var / n);
    } else {
      std::vector<double> freq(spec.categories.size(), 0.0);
      for (const auto& t : dataset.transactions()) {
        const auto code = static_cast<std::size_t>(t.features[j]);
        if (code >= freq.size()) {
          throw DataError(fmt::format(
              "feature '{}' has out-of-range category code", spec.name));
        }
        freq[code] += 1.0;
      }
      for (auto& f : freq) {
        f /= n;
      }
      stats.category_freq[j] = std::move(freq);
    }
  }
  return stats;
}

Attribution lime_explain(
    const std::function<double(std::span<const double>)>& model,
    std::span<const double> x, const TrainStats& stats, const LimeConfig& cfg) {
  const std::size_t d = x.size();
  if (stats.d() != d) {
    throw ConfigError(fmt::format(
        "lime_explain: stats cover {} features, input has {}", stats.d(), d));
  }
  if (cfg.n_samples < d + 2) {
    throw ConfigError(fmt::format(
        "lime_explain: n_samples must be >= d + 2 ({}), got {}", d + 2,
        cfg.n_samples));
  }
  if (cfg.ridge_penalty < 0.0) {
    throw ConfigError("lime_explain: ridge_penalty must be >= 0");
  }
  const double kernel_width =
      cfg.kernel_width > 0.0 ? cfg.kernel_width
                             : 0.75 * std::sqrt(static_cast<double>(d));

  // Standardized coordinates of x itself; constant numeric features keep an
  // effective stddev of 1 so they standardize to 0.
  std::vector<double> sd_eff(d, 1.0);
  std::vector<double> zx(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    if (stats.kinds[j] == FeatureKind::numeric) {
      sd_eff[j] = stats.stddev[j] > 0.0 ? stats.stddev[j] : 1.0;
      zx[j] = (x[j] - stats.mean[j]) / sd_eff[j];
    } else {
      zx[j] = 1.0;  // x matches its own category
    }
  }

  Rng rng(cfg.seed);
  const std::size_t width = d + 1;  // intercept + standardized features
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(width));
  Eigen::VectorXd rhs =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(width));

  std::vector<double> raw(d, 0.0);
  std::vector<double> z(d, 0.0);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (stats.kinds[j] == FeatureKind::numeric) {
        const double draw = rng.normal();
        z[j] = draw;
        raw[j] = stats.mean[j] + draw * sd_eff[j];
      } else {
        const auto& freq = stats.category_freq[j];
        const double u = rng.uniform01();
        double acc = 0.0;
        std::size_t code = freq.size() - 1;
        for (std::size_t c = 0; c < freq.size(); ++c) {
          acc += freq[c];
          if (u < acc) {
            code = c;
            break;
          }
        }
        raw[j] = static_cast<double>(code);
        z[j] = raw[j] == x[j] ? 1.0 : 0.0;
      }
    }
    double dist2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double delta = z[j] - zx[j];
      dist2 += delta * delta;
    }
    const double w = std::exp(-dist2 / (kernel_width * kernel_width));
    const double y = model(raw);

    gram(0, 0) += w;
    rhs(0) += w * y;
    for (std::size_t j = 0; j < d; ++j) {
      const double wj = w * z[j];
      gram(0, static_cast<Eigen::Index>(j + 1)) += wj;
      rhs(static_cast<Eigen::Index>(j + 1)) += wj * y;
      for (std::size_t l = j; l < d; ++l) {
        gram(static_cast<Eigen::Index>(j + 1),
             static_cast<Eigen::Index>(l + 1)) += wj * z[l];
      }
    }
  }
  for (std::size_t j = 0; j < width; ++j) {
    for (std::size_t l = j + 1; l < width; ++l) {
      gram(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j)) =
          gram(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l));
    }
  }
  for (std::size_t j = 1; j < width; ++j) {
    gram(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) +=
        cfg.ridge_penalty;
  }

  const Eigen::VectorXd beta = gram.ldlt().solve(rhs);
  // LDLT pseudo-inverts rank-deficient systems silently; a residual check
  // catches the singular case the penalty is there to prevent.
  const double residual = (gram * beta - rhs).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
  if (!beta.allFinite() || residual > 1e-6 * scale) {
    throw ComputeError(
        "lime_explain: singular weighted system; set ridge_penalty > 0");
  }

  Attribution out;
  out.explainer = ExplainerKind::lime;
  out.base_value = beta(0);
  out.contributions.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    out.contributions[j] = beta(static_cast<Eigen::Index>(j + 1));
  }
  return out;
}

// -- sparsification -------------------------------------------------------------------

Explanation sparsify_topk(const Attribution& attribution, std::size_t k) {
  const std::size_t d = attribution.contributions.size();
  if (k == 0) {
    throw ConfigError("sparsify_topk: k must be positive");
  }
  if (k > d) {
    throw ConfigError(
        fmt::format("sparsify_topk: k ({}) exceeds feature count ({})", k, d));
  }
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ma = std::abs(attribution.contributions[a]);
    const double mb = std::abs(attribution.contributions[b]);
    if (ma != mb) {
      return ma > mb;
    }
    return a < b;
  });

  Explanation out;
  out.d = d;
  out.k = k;
  out.explainer = attribution.explainer;
  out.base_value = attribution.base_value;
  std::vector<std::size_t> kept(order.begin(),
                                order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(kept.begin(), kept.end());
  for (const auto j : kept) {
    if (attribution.contributions[j] != 0.0) {
      out.entries.emplace_back(j, attribution.contributions[j]);
    }
  }
  return out;
}

// -- explanation sets -------------------------------------------------------------------

const Explanation* ExplanationSet::find(const std::string& id) const {
  const auto it = index_.find(id);
  return it == index_.end() ? nullptr : &explanations[it->second];
}

void ExplanationSet::add(std::string id, Explanation explanation) {
  if (!index_.emplace(id, ids.size()).second) {
    throw DataError(fmt::format("duplicate explanation for id '{}'", id));
  }
  ids.push_back(std::move(id));
  explanations.push_back(std::move(explanation));
}

namespace {

std::string explanations_header(std::size_t k) {
  std::string header = "id,explainer,base_value";
  for (std::size_t i = 0; i < k; ++i) {
    header += fmt::format(",j{},v{}", i, i);
  }
  return header;
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

double parse_double_cell(std::string_view cell, const std::string& what) {
  double value = 0.0;
  const auto* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw DataError(fmt::format("{}: not a finite number: '{}'", what, cell));
  }
  return value;
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

void save_explanations(const ExplanationSet& set,
                       const std::filesystem::path& path) {
  std::string out = explanations_header(set.k);
  out += '\n';
  for (std::size_t i = 0; i < set.ids.size(); ++i) {
    const auto& e = set.explanations[i];
    out += set.ids[i];
    out += ',';
    out += to_string(set.explainer);
    out += fmt::format(",{}", e.base_value);
    for (std::size_t p = 0; p < set.k; ++p) {
      if (p < e.entries.size()) {
        out += fmt::format(",{},{}", e.entries[p].first, e.entries[p].second);
      } else {
        out += ",-1,0";  // sentinel padding
      }
    }
    out += '\n';
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw DataError(fmt::format("cannot write file: {}", path.string()));
  }
  file << out;
}

ExplanationSet load_explanations(const std::filesystem::path& path,
                                 std::size_t d_hint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError(fmt::format("cannot open file: {}", path.string()));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string content = buf.str();

  std::vector<std::string> lines;
  {
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
  }
  if (lines.empty()) {
    throw DataError(fmt::format("{}: missing header", path.string()));
  }
  const auto header_cells = split_cells(lines[0]);
  if (header_cells.size() < 5 || (header_cells.size() - 3) % 2 != 0) {
    throw DataError(fmt::format("{}: bad explanations header", path.string()));
  }
  const std::size_t k = (header_cells.size() - 3) / 2;
  if (lines[0] != explanations_header(k)) {
    throw DataError(fmt::format("{}: bad explanations header", path.string()));
  }

  ExplanationSet set;
  set.k = k;
  bool have_tag = false;
  std::size_t max_index = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fail = [&](const std::string& cause) -> DataError {
      return DataError(fmt::format("{}: row {}: {}", path.string(), i, cause));
    };
    const auto cells = split_cells(lines[i]);
    if (cells.size() != 3 + 2 * k) {
      throw fail(fmt::format("expected {} fields, got {}", 3 + 2 * k,
                             cells.size()));
    }
    ExplainerKind tag;
    try {
      tag = parse_explainer(cells[1]);
    } catch (const Error& e) {
      throw fail(e.what());
    }
    if (!have_tag) {
      set.explainer = tag;
      have_tag = true;
    } else if (tag != set.explainer) {
      throw fail("mixed explainer tags in one file");
    }
    Explanation e;
    e.k = k;
    e.explainer = tag;
    try {
      e.base_value = parse_double_cell(cells[2], "base_value");
      for (std::size_t p = 0; p < k; ++p) {
        const long long j = parse_int_cell(cells[3 + 2 * p], "feature index");
        const double v =
            parse_double_cell(cells[4 + 2 * p], "feature value");
        if (j < 0) {
          continue;  // sentinel
        }
        if (v != 0.0) {
          e.entries.emplace_back(static_cast<std::size_t>(j), v);
          max_index = std::max(max_index, static_cast<std::size_t>(j));
        }
      }
    } catch (const DataError& err) {
      throw fail(err.what());
    }
    std::sort(e.entries.begin(), e.entries.end());
    set.add(std::string(cells[0]), std::move(e));
  }
  set.d = std::max(d_hint, set.ids.empty() ? d_hint : max_index + 1);
  for (auto& e : set.explanations) {
    e.d = set.d;
  }
  return set;
}

}  // namespace simeval
