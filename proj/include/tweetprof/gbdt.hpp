#pragma once

// Phase two: gradient-boosted regression trees with Newton leaf values.
// Binary problems use one logistic tree per round; K >= 3 classes use one
// softmax tree per class per round.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tweetprof/error.hpp"

namespace tweetprof {

struct GBDTConfig {
  int n_rounds = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  int min_samples_leaf = 1;
  double lambda = 1.0;
  std::uint64_t seed = 0;  // unused: fitting draws no random numbers

  void validate() const {
    if (n_rounds < 0) throw ConfigError("n_rounds must be non-negative");
    if (max_depth < 1) throw ConfigError("max_depth must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be at least 1");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  }
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

// Node 0 is the root. A sample goes left iff x[feature] <= threshold.
class RegressionTree {
 public:
  RegressionTree() : nodes_(1) {}

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  std::vector<TreeNode>& nodes() noexcept { return nodes_; }
  const TreeNode& root() const { return nodes_.front(); }

  int leaf_index(std::span<const double> x) const {
    int n = 0;
    while (!nodes_[static_cast<std::size_t>(n)].is_leaf()) {
      const auto& node = nodes_[static_cast<std::size_t>(n)];
      n = x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
    }
    return n;
  }

  double predict(std::span<const double> x) const { return nodes_[static_cast<std::size_t>(leaf_index(x))].value; }

  int depth() const { return depth_from(0); }

  void scale_leaves(double factor) {
    for (auto& n : nodes_) {
      if (n.is_leaf()) n.value *= factor;
    }
  }

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;

 private:
  int depth_from(int n) const {
    const auto& node = nodes_[static_cast<std::size_t>(n)];
    if (node.is_leaf()) return 0;
    return 1 + std::max(depth_from(node.left), depth_from(node.right));
  }

  std::vector<TreeNode> nodes_;
};

struct GBDTModel {
  int n_classes = 2;
  std::size_t n_features = 0;
  std::vector<double> base_scores;               // 1 entry (binary) or n_classes
  std::vector<std::vector<RegressionTree>> rounds;  // rounds[r][tree]

  bool binary() const noexcept { return n_classes == 2; }
  int trees_per_round() const noexcept { return binary() ? 1 : n_classes; }
  friend bool operator==(const GBDTModel&, const GBDTModel&) = default;
};

namespace detail {

inline constexpr double kProbabilityFloor = 1e-12;

inline double gbdt_sigmoid(double z) noexcept {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double gbdt_softplus(double z) noexcept { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// Probabilities from raw margins (one margin for binary, K for softmax).
inline std::vector<double> margins_to_proba(std::span<const double> margins, bool binary) {
  if (binary) {
    const double p = gbdt_sigmoid(margins[0]);
    return {1.0 - p, p};
  }
  const double mx = *std::max_element(margins.begin(), margins.end());
  std::vector<double> p(margins.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < margins.size(); ++c) sum += (p[c] = std::exp(margins[c] - mx));
  for (auto& v : p) v /= sum;
  return p;
}

inline double sample_loss(std::span<const double> margins, int label, bool binary) {
  if (binary) return gbdt_softplus(margins[0]) - (label == 1 ? margins[0] : 0.0);
  const double mx = *std::max_element(margins.begin(), margins.end());
  double s = 0.0;
  for (double m : margins) s += std::exp(m - mx);
  return mx + std::log(s) - margins[static_cast<std::size_t>(label)];
}

// margins is row-major n x trees_per_round.
inline double mean_loss(std::span<const double> margins, std::span<const int> labels, int width, bool binary) {
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    total += sample_loss(margins.subspan(i * static_cast<std::size_t>(width), static_cast<std::size_t>(width)),
                         labels[i], binary);
  }
  return labels.empty() ? 0.0 : total / static_cast<double>(labels.size());
}

}  // namespace detail

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

// Gains closer than this (relative to max(1, |best|)) count as ties.
inline constexpr double kGainTieTolerance = 1e-12;
// A node splits when its best candidate does not make the regularized
// objective worse (gain >= 0 up to rounding). Zero-gain splits are kept:
// without them a depth-2 tree cannot represent XOR, whose root gains are all 0.
inline constexpr double kMinSplitGain = -1e-12;

inline double split_gain(double gl, double hl, double gr, double hr, double lambda) noexcept {
  const double g = gl + gr, h = hl + hr;
  return gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda);
}

// Midpoint of consecutive distinct values, nudged so that lo <= t < hi holds.
inline double midpoint_threshold(double lo, double hi) noexcept {
  const double t = lo + (hi - lo) * 0.5;
  return (t < hi) ? t : lo;
}

// True when candidate replaces best: strictly larger gain beyond tie tolerance.
// Callers visit candidates in (feature asc, threshold asc) order, so ties keep
// the lowest feature index and then the lowest threshold.
inline bool improves(double gain, double best) noexcept {
  return gain > best + kGainTieTolerance * std::max(1.0, std::abs(best));
}

namespace detail {

// Column-major copy of the feature matrix with per-feature presorted row order.
struct ColumnStore {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> values;                    // values[f * n_rows + i]
  std::vector<std::vector<std::uint32_t>> sorted;  // rows ordered by (value, row)

  double at(std::size_t row, std::size_t f) const { return values[f * n_rows + row]; }
};

inline ColumnStore make_columns(std::span<const std::vector<double>> features) {
  ColumnStore cs;
  cs.n_rows = features.size();
  cs.n_cols = features.empty() ? 0 : features.front().size();
  cs.values.resize(cs.n_rows * cs.n_cols);
  for (std::size_t i = 0; i < cs.n_rows; ++i) {
    if (features[i].size() != cs.n_cols) {
      throw ShapeError("feature vector " + std::to_string(i) + " has length " + std::to_string(features[i].size()) +
                       ", expected " + std::to_string(cs.n_cols));
    }
    for (std::size_t f = 0; f < cs.n_cols; ++f) {
      const double v = features[i][f];
      if (!std::isfinite(v)) throw InputError("non-finite feature value at row " + std::to_string(i));
      cs.values[f * cs.n_rows + i] = v;
    }
  }
  cs.sorted.resize(cs.n_cols);
  for (std::size_t f = 0; f < cs.n_cols; ++f) {
    auto& order = cs.sorted[f];
    order.resize(cs.n_rows);
    std::iota(order.begin(), order.end(), 0u);
    const double* col = cs.values.data() + f * cs.n_rows;
    std::stable_sort(order.begin(), order.end(), [col](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
  }
  return cs;
}

// Grows one tree level by level with exact greedy split search over every
// (feature, midpoint) candidate. Leaf values are -G / (H + lambda) * shrinkage.
inline RegressionTree grow_tree(const ColumnStore& cs, std::span<const double> grad, std::span<const double> hess,
                                const GBDTConfig& cfg) {
  RegressionTree tree;
  auto& nodes = tree.nodes();
  const std::size_t n = cs.n_rows;
  std::vector<int> node_of(n, 0);  // current node per row; -1 once its leaf is final

  struct Stats {
    double g = 0.0, h = 0.0;
    std::size_t count = 0;
  };
  std::vector<Stats> totals(1);
  for (std::size_t i = 0; i < n; ++i) {
    totals[0].g += grad[i];
    totals[0].h += hess[i];
    ++totals[0].count;
  }

  std::vector<int> frontier{0};
  for (int depth = 0; !frontier.empty(); ++depth) {
    std::vector<SplitCandidate> best(nodes.size());
    if (depth < cfg.max_depth) {
      // Scratch per node in the frontier.
      std::vector<Stats> left(nodes.size());
      std::vector<double> last(nodes.size());
      for (std::size_t f = 0; f < cs.n_cols; ++f) {
        for (int id : frontier) left[static_cast<std::size_t>(id)] = Stats{};
        for (std::uint32_t row : cs.sorted[f]) {
          const int id = node_of[row];
          if (id < 0) continue;
          auto& l = left[static_cast<std::size_t>(id)];
          const double v = cs.at(row, f);
          if (l.count > 0 && v > last[static_cast<std::size_t>(id)]) {
            const auto& tot = totals[static_cast<std::size_t>(id)];
            const std::size_t right_count = tot.count - l.count;
            if (l.count >= static_cast<std::size_t>(cfg.min_samples_leaf) &&
                right_count >= static_cast<std::size_t>(cfg.min_samples_leaf)) {
              const double gain = split_gain(l.g, l.h, tot.g - l.g, tot.h - l.h, cfg.lambda);
              auto& b = best[static_cast<std::size_t>(id)];
              if (b.feature < 0 ? gain >= kMinSplitGain : improves(gain, b.gain)) {
                b = {static_cast<int>(f), midpoint_threshold(last[static_cast<std::size_t>(id)], v), gain};
              }
            }
          }
          l.g += grad[row];
          l.h += hess[row];
          ++l.count;
          last[static_cast<std::size_t>(id)] = v;
        }
      }
    }

    std::vector<int> next;
    for (int id : frontier) {
      const auto& b = best[static_cast<std::size_t>(id)];
      const auto tot = totals[static_cast<std::size_t>(id)];
      if (b.feature < 0) {
        nodes[static_cast<std::size_t>(id)].value = -tot.g / (tot.h + cfg.lambda) * cfg.learning_rate;
        continue;
      }
      const int l = static_cast<int>(nodes.size());
      nodes.emplace_back();
      nodes.emplace_back();
      totals.resize(nodes.size());
      auto& node = nodes[static_cast<std::size_t>(id)];
      node.feature = b.feature;
      node.threshold = b.threshold;
      node.left = l;
      node.right = l + 1;
      next.push_back(l);
      next.push_back(l + 1);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const int id = node_of[i];
      if (id < 0) continue;
      const auto& node = nodes[static_cast<std::size_t>(id)];
      if (node.is_leaf()) {
        node_of[i] = -1;
        continue;
      }
      const int child = cs.at(i, static_cast<std::size_t>(node.feature)) <= node.threshold ? node.left : node.right;
      node_of[i] = child;
      auto& t = totals[static_cast<std::size_t>(child)];
      t.g += grad[i];
      t.h += hess[i];
      ++t.count;
    }
    frontier = std::move(next);
  }
  return tree;
}

inline int infer_classes(std::span<const int> labels) {
  int mx = 1;
  for (int y : labels) mx = std::max(mx, y);
  return mx + 1;
}

}  // namespace detail

// Prior margins from class frequencies (clamped away from 0 and 1).
inline std::vector<double> prior_scores(std::span<const int> labels, int n_classes) {
  std::vector<double> freq(static_cast<std::size_t>(n_classes), 0.0);
  for (int y : labels) freq[static_cast<std::size_t>(y)] += 1.0;
  for (auto& f : freq) {
    f = std::clamp(f / static_cast<double>(labels.size()), detail::kProbabilityFloor, 1.0 - detail::kProbabilityFloor);
  }
  if (n_classes == 2) return {std::log(freq[1] / freq[0])};
  std::vector<double> scores;
  for (double f : freq) scores.push_back(std::log(f));
  return scores;
}

inline double tree_margin(const GBDTModel& model, std::span<const double> x, int tree) {
  double m = model.base_scores[static_cast<std::size_t>(tree)];
  for (const auto& round : model.rounds) m += round[static_cast<std::size_t>(tree)].predict(x);
  return m;
}

inline std::vector<double> predict_gbdt(const GBDTModel& model, std::span<const double> x) {
  if (x.size() != model.n_features) {
    throw ShapeError("feature vector has length " + std::to_string(x.size()) + ", model expects " +
                     std::to_string(model.n_features));
  }
  std::vector<double> margins(static_cast<std::size_t>(model.trees_per_round()));
  for (int t = 0; t < model.trees_per_round(); ++t) margins[static_cast<std::size_t>(t)] = tree_margin(model, x, t);
  return detail::margins_to_proba(margins, model.binary());
}

inline int predict_class(const GBDTModel& model, std::span<const double> x) {
  const auto p = predict_gbdt(model, x);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

// Training log-loss may not rise by more than this between rounds.
inline constexpr double kLossIncreaseTolerance = 1e-9;
inline constexpr int kMaxBacktracks = 40;

// Fits the ensemble. If a round's Newton step would raise the training loss,
// that round's leaf values are halved until it does not (or zeroed after
// kMaxBacktracks halvings), so the staged loss never increases.
inline GBDTModel fit_gbdt(std::span<const std::vector<double>> features, std::span<const int> labels, int n_classes,
                          const GBDTConfig& config) {
  config.validate();
  if (features.empty()) throw InputError("fit_gbdt needs at least one sample");
  if (features.size() != labels.size()) throw ShapeError("features and labels differ in length");
  if (n_classes < 2) throw InputError("n_classes must be at least 2");
  for (int y : labels) {
    if (y < 0 || y >= n_classes) throw InputError("label " + std::to_string(y) + " outside [0, n_classes)");
  }
  const auto cs = detail::make_columns(features);

  GBDTModel model;
  model.n_classes = n_classes;
  model.n_features = cs.n_cols;
  model.base_scores = prior_scores(labels, n_classes);

  const std::size_t n = labels.size();
  const int width = model.trees_per_round();
  const bool binary = model.binary();
  std::vector<double> margins(n * static_cast<std::size_t>(width));
  for (std::size_t i = 0; i < n; ++i) {
    for (int t = 0; t < width; ++t) margins[i * static_cast<std::size_t>(width) + static_cast<std::size_t>(t)] = model.base_scores[static_cast<std::size_t>(t)];
  }
  double loss = detail::mean_loss(margins, labels, width, binary);

  std::vector<double> grad(n), hess(n), probs;
  std::vector<double> step(n * static_cast<std::size_t>(width)), trial(margins.size());
  std::vector<double> row(cs.n_cols);
  for (int r = 0; r < config.n_rounds; ++r) {
    std::vector<std::vector<double>> all_probs(n);
    for (std::size_t i = 0; i < n; ++i) {
      all_probs[i] = detail::margins_to_proba(
          std::span<const double>(margins).subspan(i * static_cast<std::size_t>(width), static_cast<std::size_t>(width)),
          binary);
    }
    std::vector<RegressionTree> trees;
    for (int t = 0; t < width; ++t) {
      const int cls = binary ? 1 : t;
      for (std::size_t i = 0; i < n; ++i) {
        const double p = all_probs[i][static_cast<std::size_t>(cls)];
        grad[i] = p - (labels[i] == cls ? 1.0 : 0.0);
        hess[i] = std::max(p * (1.0 - p), 1e-16);
      }
      trees.push_back(detail::grow_tree(cs, grad, hess, config));
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t f = 0; f < cs.n_cols; ++f) row[f] = cs.at(i, f);
      for (int t = 0; t < width; ++t) step[i * static_cast<std::size_t>(width) + static_cast<std::size_t>(t)] = trees[static_cast<std::size_t>(t)].predict(row);
    }
    double factor = 1.0;
    double new_loss = 0.0;
    for (int attempt = 0;; ++attempt) {
      for (std::size_t k = 0; k < margins.size(); ++k) trial[k] = margins[k] + factor * step[k];
      new_loss = detail::mean_loss(trial, labels, width, binary);
      if (new_loss <= loss + kLossIncreaseTolerance) break;
      if (attempt == kMaxBacktracks) {
        factor = 0.0;
        trial = margins;
        new_loss = loss;
        break;
      }
      factor *= 0.5;
    }
    if (factor != 1.0) {
      for (auto& tr : trees) tr.scale_leaves(factor);
    }
    margins.swap(trial);
    loss = new_loss;
    model.rounds.push_back(std::move(trees));
  }
  return model;
}

inline GBDTModel fit_gbdt(std::span<const std::vector<double>> features, std::span<const int> labels,
                          const GBDTConfig& config) {
  return fit_gbdt(features, labels, detail::infer_classes(labels), config);
}

// Mean log-loss after the prior and after each round: n_rounds + 1 entries.
inline std::vector<double> staged_training_loss(const GBDTModel& model, std::span<const std::vector<double>> features,
                                                std::span<const int> labels) {
  if (features.size() != labels.size()) throw ShapeError("features and labels differ in length");
  for (const auto& x : features) {
    if (x.size() != model.n_features) throw ShapeError("feature vector length does not match model");
  }
  for (int y : labels) {
    if (y < 0 || y >= model.n_classes) throw InputError("label outside model classes");
  }
  const int width = model.trees_per_round();
  const std::size_t n = labels.size();
  std::vector<double> margins(n * static_cast<std::size_t>(width));
  for (std::size_t i = 0; i < n; ++i) {
    for (int t = 0; t < width; ++t) margins[i * static_cast<std::size_t>(width) + static_cast<std::size_t>(t)] = model.base_scores[static_cast<std::size_t>(t)];
  }
  std::vector<double> out{detail::mean_loss(margins, labels, width, model.binary())};
  for (const auto& round : model.rounds) {
    for (std::size_t i = 0; i < n; ++i) {
      for (int t = 0; t < width; ++t) margins[i * static_cast<std::size_t>(width) + static_cast<std::size_t>(t)] += round[static_cast<std::size_t>(t)].predict(features[i]);
    }
    out.push_back(detail::mean_loss(margins, labels, width, model.binary()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON tree dump. Keys are emitted in a fixed order.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json node_to_json(const RegressionTree& tree, int id) {
  const auto& n = tree.nodes()[static_cast<std::size_t>(id)];
  nlohmann::ordered_json j;
  if (n.is_leaf()) {
    j["leaf"] = n.value;
    return j;
  }
  j["feature"] = n.feature;
  j["threshold"] = n.threshold;
  j["left"] = node_to_json(tree, n.left);
  j["right"] = node_to_json(tree, n.right);
  return j;
}

inline int node_from_json(const nlohmann::json& j, RegressionTree& tree, std::size_t n_features) {
  const int id = static_cast<int>(tree.nodes().size());
  tree.nodes().emplace_back();
  if (j.contains("leaf")) {
    tree.nodes()[static_cast<std::size_t>(id)].value = j.at("leaf").get<double>();
    return id;
  }
  const int feature = j.at("feature").get<int>();
  if (feature < 0 || static_cast<std::size_t>(feature) >= n_features) throw FormatError("tree feature out of range", 0);
  const double threshold = j.at("threshold").get<double>();
  const int l = node_from_json(j.at("left"), tree, n_features);
  const int r = node_from_json(j.at("right"), tree, n_features);
  auto& n = tree.nodes()[static_cast<std::size_t>(id)];
  n.feature = feature;
  n.threshold = threshold;
  n.left = l;
  n.right = r;
  return id;
}

}  // namespace detail

inline nlohmann::ordered_json gbdt_to_json(const GBDTModel& model) {
  nlohmann::ordered_json j;
  j["format"] = "tweetprof-gbdt";
  j["version"] = 1;
  j["objective"] = model.binary() ? "binary_logistic" : "softmax";
  j["n_classes"] = model.n_classes;
  j["n_features"] = model.n_features;
  j["base_scores"] = model.base_scores;
  auto rounds = nlohmann::ordered_json::array();
  for (const auto& round : model.rounds) {
    auto trees = nlohmann::ordered_json::array();
    for (const auto& t : round) trees.push_back(detail::node_to_json(t, 0));
    rounds.push_back(std::move(trees));
  }
  j["rounds"] = std::move(rounds);
  return j;
}

inline GBDTModel gbdt_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "tweetprof-gbdt") throw FormatError("not a GBDT dump", 0);
  GBDTModel m;
  m.n_classes = j.at("n_classes").get<int>();
  m.n_features = j.at("n_features").get<std::size_t>();
  m.base_scores = j.at("base_scores").get<std::vector<double>>();
  if (m.n_classes < 2 || static_cast<int>(m.base_scores.size()) != m.trees_per_round()) {
    throw FormatError("GBDT dump has inconsistent class count", 0);
  }
  for (const auto& round : j.at("rounds")) {
    if (static_cast<int>(round.size()) != m.trees_per_round()) throw FormatError("GBDT round has wrong tree count", 0);
    std::vector<RegressionTree> trees;
    for (const auto& t : round) {
      RegressionTree tree;
      tree.nodes().clear();
      detail::node_from_json(t, tree, m.n_features);
      trees.push_back(std::move(tree));
    }
    m.rounds.push_back(std::move(trees));
  }
  return m;
}

inline nlohmann::ordered_json gbdt_config_to_json(const GBDTConfig& c) {
  nlohmann::ordered_json j;
  j["n_rounds"] = c.n_rounds;
  j["max_depth"] = c.max_depth;
  j["learning_rate"] = c.learning_rate;
  j["min_samples_leaf"] = c.min_samples_leaf;
  j["lambda"] = c.lambda;
  j["seed"] = c.seed;
  return j;
}

// Missing keys keep their defaults.
inline GBDTConfig gbdt_config_from_json(const nlohmann::json& j, GBDTConfig c = {}) {
  c.n_rounds = j.value("n_rounds", c.n_rounds);
  c.max_depth = j.value("max_depth", c.max_depth);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.min_samples_leaf = j.value("min_samples_leaf", c.min_samples_leaf);
  c.lambda = j.value("lambda", c.lambda);
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace tweetprof
