#include "simeval/tree.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include <fmt/format.h>

namespace simeval {

namespace {

double parse_double_token(std::string_view cell, const std::string& what) {
  double value = 0.0;
  const auto* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw DataError(fmt::format("{}: bad number '{}'", what, cell));
  }
  return value;
}

long long parse_int_token(std::string_view cell, const std::string& what) {
  long long value = 0;
  const auto* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw DataError(fmt::format("{}: bad integer '{}'", what, cell));
  }
  return value;
}

// Row indices in ascending id order when ids are present, else 0..n-1.
std::vector<std::uint32_t> canonical_order(const TrainingSet& data) {
  std::vector<std::uint32_t> order(data.x.rows());
  std::iota(order.begin(), order.end(), 0);
  if (!data.ids.empty()) {
    if (data.ids.size() != data.x.rows()) {
      throw ComputeError("training set ids do not match row count");
    }
    std::sort(order.begin(), order.end(),
              [&](std::uint32_t a, std::uint32_t b) {
                return data.ids[a] < data.ids[b];
              });
  }
  return order;
}

void validate_training_set(const TrainingSet& data, const Hyperparams& hp) {
  if (hp.min_samples_leaf < 1) {
    throw ConfigError("min_samples_leaf must be >= 1");
  }
  if (hp.n_trees < 1) {
    throw ConfigError("n_trees must be >= 1");
  }
  if (data.x.rows() == 0) {
    throw ComputeError("fit error: empty training set");
  }
  if (data.x.cols() == 0) {
    throw ComputeError("fit error: no features");
  }
  if (data.labels.size() != data.x.rows()) {
    throw ComputeError("fit error: labels do not match row count");
  }
  for (const int y : data.labels) {
    if (y != 0 && y != 1) {
      throw ComputeError(fmt::format("fit error: label {} not in {{0,1}}", y));
    }
  }
  if (data.x.rows() < hp.min_samples_leaf) {
    throw ComputeError(fmt::format(
        "fit error: {} rows cannot satisfy min_samples_leaf={}",
        data.x.rows(), hp.min_samples_leaf));
  }
}

struct BestSplit {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double impurity = std::numeric_limits<double>::infinity();
};

class Grower {
 public:
  Grower(const TrainingSet& data, const Hyperparams& hp, std::size_t mtry,
         Rng& rng)
      : data_(data), hp_(hp), mtry_(mtry), rng_(rng) {}

  DecisionTree grow(std::vector<std::uint32_t> rows) {
    nodes_.clear();
    grow_node(rows, 0);
    return DecisionTree(std::move(nodes_), data_.x.cols());
  }

 private:
  std::int32_t grow_node(std::span<std::uint32_t> rows, std::size_t depth) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();

    const std::size_t n = rows.size();
    std::size_t pos = 0;
    for (const auto r : rows) {
      pos += static_cast<std::size_t>(data_.labels[r]);
    }
    nodes_[id].cover = static_cast<std::int64_t>(n);
    nodes_[id].node_mean =
        static_cast<double>(pos) / static_cast<double>(n);

    const bool pure = pos == 0 || pos == n;
    const bool depth_capped = hp_.max_depth != 0 && depth >= hp_.max_depth;
    if (pure || depth_capped || n < 2 * hp_.min_samples_leaf) {
      return id;
    }

    const BestSplit best = find_split(rows, pos);
    if (!best.found) {
      return id;
    }

    auto mid = std::stable_partition(rows.begin(), rows.end(),
                                     [&](std::uint32_t r) {
                                       return data_.x(r, best.feature) <=
                                              best.threshold;
                                     });
    const auto left_span =
        rows.subspan(0, static_cast<std::size_t>(mid - rows.begin()));
    const auto right_span =
        rows.subspan(static_cast<std::size_t>(mid - rows.begin()));

    nodes_[id].feature = static_cast<std::int32_t>(best.feature);
    nodes_[id].threshold = best.threshold;
    const std::int32_t left = grow_node(left_span, depth + 1);
    const std::int32_t right = grow_node(right_span, depth + 1);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  BestSplit find_split(std::span<const std::uint32_t> rows,
                       std::size_t total_pos) {
    const std::size_t d = data_.x.cols();
    std::vector<std::size_t> features;
    if (mtry_ >= d) {
      features.resize(d);
      std::iota(features.begin(), features.end(), 0);
    } else {
      // Partial Fisher-Yates draw of mtry distinct features, then sorted so
      // the (feature index, threshold) tie-break stays order-independent.
      std::vector<std::size_t> all(d);
      std::iota(all.begin(), all.end(), 0);
      for (std::size_t i = 0; i < mtry_; ++i) {
        const auto pick =
            i + static_cast<std::size_t>(rng_.below(all.size() - i));
        std::swap(all[i], all[pick]);
      }
      features.assign(all.begin(),
                      all.begin() + static_cast<std::ptrdiff_t>(mtry_));
      std::sort(features.begin(), features.end());
    }

    const std::size_t n = rows.size();
    const double n_total = static_cast<double>(n);
    const double pos_total = static_cast<double>(total_pos);
    BestSplit best;
    std::vector<std::pair<double, int>> column(n);
    for (const auto j : features) {
      for (std::size_t i = 0; i < n; ++i) {
        column[i] = {data_.x(rows[i], j), data_.labels[rows[i]]};
      }
      std::sort(column.begin(), column.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      double n_left = 0.0;
      double pos_left = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        n_left += 1.0;
        pos_left += column[i].second;
        if (column[i].first == column[i + 1].first) {
          continue;
        }
        const double n_right = n_total - n_left;
        if (n_left < static_cast<double>(hp_.min_samples_leaf) ||
            n_right < static_cast<double>(hp_.min_samples_leaf)) {
          continue;
        }
        const double impurity = weighted_gini(n_left, pos_left) +
                                weighted_gini(n_right, pos_total - pos_left);
        if (impurity < best.impurity) {
          best.found = true;
          best.feature = j;
          best.threshold = 0.5 * (column[i].first + column[i + 1].first);
          best.impurity = impurity;
        }
      }
    }
    return best;
  }

  static double weighted_gini(double n, double pos) {
    const double p = pos / n;
    const double q = 1.0 - p;
    return n * (1.0 - p * p - q * q);
  }

  const TrainingSet& data_;
  const Hyperparams& hp_;
  std::size_t mtry_;
  Rng& rng_;
  std::vector<TreeNode> nodes_;
};

}  // namespace

// -- model basics --------------------------------------------------------------

std::string_view to_string(ModelFamily f) {
  return f == ModelFamily::random_forest ? "random_forest" : "decision_tree";
}

ModelFamily parse_model_family(std::string_view s) {
  if (s == "random_forest") {
    return ModelFamily::random_forest;
  }
  if (s == "decision_tree") {
    return ModelFamily::decision_tree;
  }
  throw ConfigError(fmt::format("unknown model family '{}'", s));
}

DecisionTree::DecisionTree(std::vector<TreeNode> nodes, std::size_t n_features)
    : nodes_(std::move(nodes)), n_features_(n_features) {
  if (nodes_.empty()) {
    throw ComputeError("decision tree needs at least one node");
  }
  for (const auto& node : nodes_) {
    if (!node.is_leaf()) {
      const bool child_ok =
          node.left >= 0 && node.right >= 0 &&
          static_cast<std::size_t>(node.left) < nodes_.size() &&
          static_cast<std::size_t>(node.right) < nodes_.size();
      if (!child_ok ||
          static_cast<std::size_t>(node.feature) >= n_features_) {
        throw DataError("malformed decision tree node");
      }
    }
  }
}

double DecisionTree::predict(std::span<const double> x) const {
  if (x.size() != n_features_) {
    throw ComputeError(fmt::format(
        "dimension mismatch: input has {} features, model expects {}",
        x.size(), n_features_));
  }
  const TreeNode* node = &nodes_.front();
  while (!node->is_leaf()) {
    node = x[static_cast<std::size_t>(node->feature)] <= node->threshold
               ? &nodes_[static_cast<std::size_t>(node->left)]
               : &nodes_[static_cast<std::size_t>(node->right)];
  }
  return node->node_mean;
}

Forest::Forest(std::vector<DecisionTree> trees, Hyperparams hp)
    : trees_(std::move(trees)), hp_(hp) {
  if (trees_.empty()) {
    throw ComputeError("forest needs at least one tree");
  }
  n_features_ = trees_.front().n_features();
  for (const auto& t : trees_) {
    if (t.n_features() != n_features_) {
      throw ComputeError("forest trees disagree on feature count");
    }
  }
}

double Forest::predict(std::span<const double> x) const {
  double sum = 0.0;
  for (const auto& t : trees_) {
    sum += t.predict(x);
  }
  return sum / static_cast<double>(trees_.size());
}

double predict_proba(const Model& model, std::span<const double> x) {
  return std::visit([&](const auto& m) { return m.predict(x); }, model);
}

std::size_t model_n_features(const Model& model) {
  return std::visit([](const auto& m) { return m.n_features(); }, model);
}

std::span<const DecisionTree> trees_of(const Model& model) {
  if (const auto* tree = std::get_if<DecisionTree>(&model)) {
    return {tree, 1};
  }
  return std::get<Forest>(model).trees();
}

// -- fitting ----------------------------------------------------------------------

DecisionTree fit_tree(const TrainingSet& data, const Hyperparams& hp) {
  validate_training_set(data, hp);
  Rng rng(hp.seed);
  Grower grower(data, hp, data.x.cols(), rng);
  return grower.grow(canonical_order(data));
}

Forest fit_forest(const TrainingSet& data, const Hyperparams& hp) {
  validate_training_set(data, hp);
  const auto canonical = canonical_order(data);
  const std::size_t n = canonical.size();
  const std::size_t d = data.x.cols();
  const auto mtry = static_cast<std::size_t>(
      std::ceil(std::sqrt(static_cast<double>(d))));

  std::vector<DecisionTree> trees;
  trees.reserve(hp.n_trees);
  for (std::size_t t = 0; t < hp.n_trees; ++t) {
    Rng rng(derive_seed(hp.seed, "tree", t));
    std::vector<std::uint32_t> rows;
    rows.reserve(n);
    if (hp.bootstrap) {
      for (std::size_t i = 0; i < n; ++i) {
        rows.push_back(canonical[static_cast<std::size_t>(rng.below(n))]);
      }
      std::sort(rows.begin(), rows.end(),
                [&](std::uint32_t a, std::uint32_t b) {
                  if (data.ids.empty()) {
                    return a < b;
                  }
                  return data.ids[a] < data.ids[b];
                });
    } else {
      rows = canonical;
    }
    Grower grower(data, hp, std::min(mtry, d), rng);
    trees.push_back(grower.grow(std::move(rows)));
  }
  return Forest(std::move(trees), hp);
}

Model fit_model(const TrainingSet& data, const Hyperparams& hp) {
  if (hp.family == ModelFamily::decision_tree) {
    return fit_tree(data, hp);
  }
  return fit_forest(data, hp);
}

// -- grid search --------------------------------------------------------------------

GridSpec default_grid(std::uint64_t seed, std::size_t n_trees) {
  GridSpec grid;
  const std::size_t leaf_minima[] = {5, 10, 15, 20, 25, 30};
  std::size_t idx = 0;
  for (const auto family :
       {ModelFamily::random_forest, ModelFamily::decision_tree}) {
    for (const auto msl : leaf_minima) {
      Hyperparams hp;
      hp.family = family;
      hp.min_samples_leaf = msl;
      hp.n_trees = n_trees;
      hp.seed = derive_seed(seed, "candidate", idx);
      grid.candidates.push_back(hp);
      ++idx;
    }
  }
  return grid;
}

namespace {

std::size_t effective_trees(const Hyperparams& hp) {
  return hp.family == ModelFamily::decision_tree ? 1 : hp.n_trees;
}

std::string describe_candidate(std::size_t index, const Hyperparams& hp) {
  return fmt::format("grid candidate {} ({}, min_samples_leaf={})", index,
                     to_string(hp.family), hp.min_samples_leaf);
}

}  // namespace

GridSearchResult grid_search(
    const TrainingSet& train, const GridSpec& grid,
    const std::function<double(const Model&)>& validation_objective,
    unsigned parallelism) {
  if (grid.candidates.empty()) {
    throw ConfigError("grid search needs at least one candidate");
  }
  const std::size_t n_cand = grid.candidates.size();

  std::vector<Model> models(n_cand);
  std::vector<double> scores(n_cand, 0.0);
  std::vector<std::string> failures(n_cand);

  const auto run_candidate = [&](std::size_t i) {
    try {
      models[i] = fit_model(train, grid.candidates[i]);
      const double score = validation_objective(models[i]);
      if (!std::isfinite(score)) {
        throw ComputeError("objective returned a non-finite score");
      }
      scores[i] = score;
    } catch (const Error& e) {
      failures[i] = e.what();
    }
  };

  if (parallelism <= 1 || n_cand == 1) {
    for (std::size_t i = 0; i < n_cand; ++i) {
      run_candidate(i);
    }
  } else {
    std::vector<std::thread> workers;
    std::atomic<std::size_t> next{0};
    const unsigned n_workers =
        std::min<unsigned>(parallelism, static_cast<unsigned>(n_cand));
    for (unsigned w = 0; w < n_workers; ++w) {
      workers.emplace_back([&]() {
        while (true) {
          const std::size_t i = next.fetch_add(1);
          if (i >= n_cand) {
            return;
          }
          run_candidate(i);
        }
      });
    }
    for (auto& w : workers) {
      w.join();
    }
  }

  for (std::size_t i = 0; i < n_cand; ++i) {
    if (!failures[i].empty()) {
      throw ComputeError(fmt::format("{} failed: {}",
                                     describe_candidate(i, grid.candidates[i]),
                                     failures[i]));
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < n_cand; ++i) {
    const auto& a = grid.candidates[i];
    const auto& b = grid.candidates[best];
    const bool better =
        scores[i] < scores[best] ||
        (scores[i] == scores[best] &&
         (effective_trees(a) < effective_trees(b) ||
          (effective_trees(a) == effective_trees(b) &&
           a.min_samples_leaf < b.min_samples_leaf)));
    if (better) {
      best = i;
    }
  }

  GridSearchResult result;
  result.best = grid.candidates[best];
  result.best_model = std::move(models[best]);
  result.table.reserve(n_cand);
  for (std::size_t i = 0; i < n_cand; ++i) {
    result.table.push_back({grid.candidates[i], scores[i]});
  }
  return result;
}

// -- serialization ---------------------------------------------------------------------

namespace {

void serialize_tree(std::string& out, const DecisionTree& tree,
                    std::size_t index) {
  out += fmt::format("tree {} n_nodes {}\n", index, tree.nodes().size());
  for (std::size_t i = 0; i < tree.nodes().size(); ++i) {
    const auto& n = tree.nodes()[i];
    out += fmt::format("n {} {} {} {} {} {} {} {}\n", i,
                       n.is_leaf() ? "leaf" : "split", n.feature, n.threshold,
                       n.node_mean, n.cover, n.left, n.right);
  }
}

std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t start = 0;
  while (start < line.size()) {
    while (start < line.size() && line[start] == ' ') {
      ++start;
    }
    std::size_t end = start;
    while (end < line.size() && line[end] != ' ') {
      ++end;
    }
    if (end > start) {
      tokens.push_back(line.substr(start, end - start));
    }
    start = end;
  }
  return tokens;
}

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  bool next(std::string_view& line) {
    while (pos_ <= text_.size()) {
      if (pos_ == text_.size()) {
        return false;
      }
      const std::size_t end = text_.find('\n', pos_);
      const std::size_t stop = end == std::string_view::npos ? text_.size()
                                                             : end;
      line = text_.substr(pos_, stop - pos_);
      pos_ = stop + 1;
      ++line_no_;
      if (!line.empty()) {
        return true;
      }
    }
    return false;
  }

  std::size_t line_no() const { return line_no_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

DecisionTree parse_tree(LineReader& reader, std::size_t expected_index,
                        std::size_t n_features) {
  std::string_view line;
  if (!reader.next(line)) {
    throw DataError("model file: unexpected end of file before tree block");
  }
  auto tokens = tokenize(line);
  if (tokens.size() != 4 || tokens[0] != "tree" || tokens[2] != "n_nodes") {
    throw DataError(fmt::format("model file line {}: expected tree header",
                                reader.line_no()));
  }
  if (static_cast<std::size_t>(
          parse_int_token(tokens[1], "tree index")) != expected_index) {
    throw DataError(fmt::format("model file line {}: tree index mismatch",
                                reader.line_no()));
  }
  const auto n_nodes = static_cast<std::size_t>(
      parse_int_token(tokens[3], "node count"));
  std::vector<TreeNode> nodes(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i) {
    if (!reader.next(line)) {
      throw DataError("model file: unexpected end of file inside tree block");
    }
    tokens = tokenize(line);
    if (tokens.size() != 9 || tokens[0] != "n" ||
        (tokens[2] != "leaf" && tokens[2] != "split")) {
      throw DataError(fmt::format("model file line {}: expected node record",
                                  reader.line_no()));
    }
    if (static_cast<std::size_t>(parse_int_token(tokens[1], "node index")) !=
        i) {
      throw DataError(fmt::format("model file line {}: node index mismatch",
                                  reader.line_no()));
    }
    TreeNode n;
    n.feature = static_cast<std::int32_t>(parse_int_token(tokens[3], "feature"));
    n.threshold = parse_double_token(tokens[4], "threshold");
    n.node_mean = parse_double_token(tokens[5], "node_mean");
    n.cover = parse_int_token(tokens[6], "cover");
    n.left = static_cast<std::int32_t>(parse_int_token(tokens[7], "left"));
    n.right = static_cast<std::int32_t>(parse_int_token(tokens[8], "right"));
    if ((tokens[2] == "leaf") != n.is_leaf()) {
      throw DataError(fmt::format(
          "model file line {}: node kind does not match its feature field",
          reader.line_no()));
    }
    nodes[i] = n;
  }
  return DecisionTree(std::move(nodes), n_features);
}

}  // namespace

std::string serialize_model(const Model& model) {
  std::string out = "simeval-model v1\n";
  const bool is_forest = std::holds_alternative<Forest>(model);
  out += fmt::format("kind {}\n", is_forest ? "forest" : "tree");
  Hyperparams hp;
  if (is_forest) {
    hp = std::get<Forest>(model).hyperparams();
  } else {
    hp.family = ModelFamily::decision_tree;
    hp.n_trees = 1;
  }
  const auto trees = trees_of(model);
  out += fmt::format("family {}\n", to_string(hp.family));
  out += fmt::format("n_features {}\n", model_n_features(model));
  out += fmt::format("n_trees {}\n", trees.size());
  out += fmt::format("min_samples_leaf {}\n", hp.min_samples_leaf);
  out += fmt::format("max_depth {}\n", hp.max_depth);
  out += fmt::format("bootstrap {}\n", hp.bootstrap ? 1 : 0);
  out += fmt::format("seed {}\n", hp.seed);
  for (std::size_t t = 0; t < trees.size(); ++t) {
    serialize_tree(out, trees[t], t);
  }
  out += "end\n";
  return out;
}

Model deserialize_model(std::string_view text) {
  LineReader reader(text);
  std::string_view line;
  const auto expect_kv = [&](std::string_view key) -> std::string {
    if (!reader.next(line)) {
      throw DataError(
          fmt::format("model file: missing '{}' line", key));
    }
    const auto tokens = tokenize(line);
    if (tokens.size() != 2 || tokens[0] != key) {
      throw DataError(fmt::format("model file line {}: expected '{} <value>'",
                                  reader.line_no(), key));
    }
    return std::string(tokens[1]);
  };

  if (!reader.next(line) || line != "simeval-model v1") {
    throw DataError("model file: unsupported format (want 'simeval-model v1')");
  }
  const std::string kind = expect_kv("kind");
  if (kind != "forest" && kind != "tree") {
    throw DataError(fmt::format("model file: unknown kind '{}'", kind));
  }
  Hyperparams hp;
  hp.family = parse_model_family(expect_kv("family"));
  const auto n_features = static_cast<std::size_t>(
      parse_int_token(expect_kv("n_features"), "n_features"));
  const auto n_trees = static_cast<std::size_t>(
      parse_int_token(expect_kv("n_trees"), "n_trees"));
  hp.n_trees = n_trees;
  hp.min_samples_leaf = static_cast<std::size_t>(
      parse_int_token(expect_kv("min_samples_leaf"), "min_samples_leaf"));
  hp.max_depth = static_cast<std::size_t>(
      parse_int_token(expect_kv("max_depth"), "max_depth"));
  hp.bootstrap = parse_int_token(expect_kv("bootstrap"), "bootstrap") != 0;
  hp.seed = static_cast<std::uint64_t>(
      parse_int_token(expect_kv("seed"), "seed"));

  std::vector<DecisionTree> trees;
  trees.reserve(n_trees);
  for (std::size_t t = 0; t < n_trees; ++t) {
    trees.push_back(parse_tree(reader, t, n_features));
  }
  if (!reader.next(line) || line != "end") {
    throw DataError("model file: missing 'end' marker");
  }
  if (kind == "tree") {
    if (trees.size() != 1) {
      throw DataError("model file: kind tree must contain exactly one tree");
    }
    return trees.front();
  }
  return Forest(std::move(trees), hp);
}

void save_model(const Model& model, const std::filesystem::path& path) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw DataError(fmt::format("cannot write file: {}", path.string()));
  }
  file << serialize_model(model);
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError(fmt::format("cannot open file: {}", path.string()));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str());
}

}  // namespace simeval
