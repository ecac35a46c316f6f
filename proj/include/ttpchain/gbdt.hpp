#pragma once

// Binary gradient-boosted regression trees with logistic loss.
//
// Trees are grown level by level with exact greedy splits over presorted
// columns. Leaves take the Newton step -G / (H + lambda). Among splits of
// equal gain the lowest feature index wins, then the lowest threshold. A row
// goes left when x < threshold.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttpchain/error.hpp"

namespace ttpchain {

using FeatureMatrix = std::vector<std::vector<double>>;  // row-major

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const {
    std::size_t k = 0;
    while (!nodes[k].is_leaf())
      k = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[k].feature)] < nodes[k].threshold ? nodes[k].left
                                                                                                         : nodes[k].right);
    return nodes[k].value;
  }

  std::size_t leaves() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

struct BoostParams {
  std::size_t trees = 200;
  std::size_t max_depth = 3;
  double learning_rate = 0.1;
  double l2 = 1.0;
  double min_child_weight = 1e-3;
};

struct BinaryGbdt {
  double init = 0.0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;
  // Mean training log-loss before the first tree and after each tree.
  std::vector<double> loss_history;
  // No positive or no negative example: the model is its prior.
  bool degenerate = false;

  double raw_score(std::span<const double> x) const {
    double f = init;
    for (const auto& t : trees) f += learning_rate * t.predict(x);
    return f;
  }

  double probability(std::span<const double> x) const { return 1.0 / (1.0 + std::exp(-raw_score(x))); }

  friend bool operator==(const BinaryGbdt&, const BinaryGbdt&) = default;
};

namespace gbdt {

inline constexpr double kPriorClamp = 1e-6;
inline constexpr int kMaxBacktracks = 40;

inline double sigmoid(double f) { return 1.0 / (1.0 + std::exp(-f)); }

// Numerically stable log(1 + exp(-m)) form of the logistic loss.
inline double log_loss(int y, double f) {
  double m = y ? f : -f;
  return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

inline double mean_log_loss(std::span<const int> y, std::span<const double> f) {
  double s = 0.0;
  for (std::size_t r = 0; r < y.size(); ++r) s += log_loss(y[r], f[r]);
  return s / static_cast<double>(y.size());
}

inline double prior_log_odds(std::size_t positives, std::size_t n) {
  double p = std::clamp(static_cast<double>(positives) / static_cast<double>(n), kPriorClamp, 1.0 - kPriorClamp);
  return std::log(p / (1.0 - p));
}

namespace detail {

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

struct NodeScan {
  double gl = 0.0, hl = 0.0;
  double last = 0.0;
  bool has_last = false;
};

inline double midpoint(double lo, double hi) {
  double t = lo + (hi - lo) / 2.0;
  return t > lo ? t : hi;
}

}  // namespace detail

// Column order by value for every feature in `features`; stable in row index.
inline std::vector<std::vector<std::uint32_t>> presort(const FeatureMatrix& x, std::span<const std::size_t> features) {
  std::vector<std::vector<std::uint32_t>> out;
  out.reserve(features.size());
  for (auto f : features) {
    std::vector<std::uint32_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0u);
    std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) { return x[a][f] < x[b][f]; });
    out.push_back(std::move(idx));
  }
  return out;
}

inline RegressionTree fit_tree(const FeatureMatrix& x, std::span<const double> grad, std::span<const double> hess,
                               std::span<const std::size_t> features,
                               const std::vector<std::vector<std::uint32_t>>& sorted, const BoostParams& p) {
  const std::size_t n = x.size();
  RegressionTree tree;
  std::vector<int> node_of(n, 0);
  struct Stats {
    double g = 0.0, h = 0.0;
  };
  tree.nodes.push_back({});
  std::vector<Stats> stats(1);
  for (std::size_t r = 0; r < n; ++r) {
    stats[0].g += grad[r];
    stats[0].h += hess[r];
  }
  auto leaf_value = [&](const Stats& s) { return -s.g / (s.h + p.l2); };
  auto score = [&](double g, double h) { return g * g / (h + p.l2); };

  std::vector<int> frontier = {0};
  for (std::size_t depth = 0; depth < p.max_depth && !frontier.empty(); ++depth) {
    // Map node id -> slot in the frontier.
    std::vector<int> slot(tree.nodes.size(), -1);
    for (std::size_t k = 0; k < frontier.size(); ++k) slot[static_cast<std::size_t>(frontier[k])] = static_cast<int>(k);
    std::vector<detail::SplitCandidate> best(frontier.size());

    for (std::size_t fi = 0; fi < features.size(); ++fi) {
      const auto f = features[fi];
      std::vector<detail::NodeScan> scan(frontier.size());
      for (auto r : sorted[fi]) {
        int s = slot[static_cast<std::size_t>(node_of[r])];
        if (s < 0) continue;
        auto& st = scan[static_cast<std::size_t>(s)];
        const double v = x[r][f];
        if (st.has_last && v > st.last) {
          const auto& tot = stats[static_cast<std::size_t>(frontier[static_cast<std::size_t>(s)])];
          double gr = tot.g - st.gl, hr = tot.h - st.hl;
          if (st.hl >= p.min_child_weight && hr >= p.min_child_weight) {
            double gain = score(st.gl, st.hl) + score(gr, hr) - score(tot.g, tot.h);
            auto& b = best[static_cast<std::size_t>(s)];
            if (gain > b.gain) b = {gain, static_cast<int>(f), detail::midpoint(st.last, v)};
          }
        }
        st.gl += grad[r];
        st.hl += hess[r];
        st.last = v;
        st.has_last = true;
      }
    }

    std::vector<int> next;
    for (std::size_t k = 0; k < frontier.size(); ++k) {
      const auto& b = best[k];
      if (b.feature < 0) continue;
      const auto id = static_cast<std::size_t>(frontier[k]);
      tree.nodes[id].feature = b.feature;
      tree.nodes[id].threshold = b.threshold;
      tree.nodes[id].left = static_cast<int>(tree.nodes.size());
      tree.nodes[id].right = static_cast<int>(tree.nodes.size() + 1);
      tree.nodes.push_back({});
      tree.nodes.push_back({});
      stats.resize(tree.nodes.size());
      next.push_back(tree.nodes[id].left);
      next.push_back(tree.nodes[id].right);
    }
    if (next.empty()) break;
    for (std::size_t r = 0; r < n; ++r) {
      const auto& node = tree.nodes[static_cast<std::size_t>(node_of[r])];
      if (node.is_leaf()) continue;
      node_of[r] = x[r][static_cast<std::size_t>(node.feature)] < node.threshold ? node.left : node.right;
      auto& s = stats[static_cast<std::size_t>(node_of[r])];
      s.g += grad[r];
      s.h += hess[r];
    }
    frontier = std::move(next);
  }
  for (std::size_t k = 0; k < tree.nodes.size(); ++k)
    if (tree.nodes[k].is_leaf()) tree.nodes[k].value = leaf_value(stats[k]);
  return tree;
}

// Fits one binary booster on the rows of `x` (restricted to `features`).
// Each round shrinks a tree's leaves by halving until the mean training
// loss does not increase, so loss_history is non-increasing.
inline BinaryGbdt fit_binary(const FeatureMatrix& x, std::span<const int> y, std::span<const std::size_t> features,
                             const BoostParams& p) {
  if (x.empty() || x.size() != y.size()) throw TrainingError("gbdt: empty or misaligned training data");
  if (p.trees < 1 || p.max_depth < 1 || !(p.learning_rate > 0.0 && p.learning_rate <= 1.0))
    throw ContractViolation("gbdt: invalid boosting parameters");
  const std::size_t n = x.size();
  std::size_t positives = 0;
  for (int v : y) positives += v ? 1 : 0;

  BinaryGbdt model;
  model.learning_rate = p.learning_rate;
  model.init = prior_log_odds(positives, n);
  std::vector<double> f(n, model.init);
  model.loss_history.push_back(mean_log_loss(y, f));
  if (positives == 0 || positives == n) {
    model.degenerate = true;
    return model;
  }

  auto sorted = presort(x, features);
  std::vector<double> grad(n), hess(n), step(n);
  for (std::size_t round = 0; round < p.trees; ++round) {
    for (std::size_t r = 0; r < n; ++r) {
      double pr = sigmoid(f[r]);
      grad[r] = pr - static_cast<double>(y[r]);
      hess[r] = std::max(pr * (1.0 - pr), 1e-16);
    }
    auto tree = fit_tree(x, grad, hess, features, sorted, p);
    const double before = model.loss_history.back();
    double after = 0.0;
    for (int attempt = 0;; ++attempt) {
      std::vector<double> trial(n);
      for (std::size_t r = 0; r < n; ++r) {
        step[r] = p.learning_rate * tree.predict(x[r]);
        trial[r] = f[r] + step[r];
      }
      after = mean_log_loss(y, trial);
      if (after <= before) {
        f = std::move(trial);
        break;
      }
      if (attempt >= kMaxBacktracks) {
        for (auto& node : tree.nodes) node.value = 0.0;
        after = before;
        break;
      }
      for (auto& node : tree.nodes) node.value /= 2.0;
    }
    model.trees.push_back(std::move(tree));
    model.loss_history.push_back(after);
  }
  return model;
}

inline BinaryGbdt fit_binary(const FeatureMatrix& x, std::span<const int> y, const BoostParams& p) {
  if (x.empty()) throw TrainingError("gbdt: empty training data");
  std::vector<std::size_t> all(x.front().size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return fit_binary(x, y, all, p);
}

// ---- deterministic sampling ----------------------------------------------

// Uniform integer in [0, bound) by rejection, independent of the standard
// library's distribution implementation.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound == 0) throw ContractViolation("uniform_below: zero bound");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v;
  do v = rng();
  while (v >= limit);
  return v % bound;
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_below(rng, i)]);
}

// `k` distinct elements of `pool`, in their original order.
template <typename T>
std::vector<T> sample_sorted(std::vector<T> pool, std::size_t k, std::mt19937_64& rng) {
  if (k >= pool.size()) return pool;
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + uniform_below(rng, idx.size() - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  std::vector<T> out;
  out.reserve(k);
  for (auto i : idx) out.push_back(pool[i]);
  return out;
}

// ---- serialization ---------------------------------------------------------

inline nlohmann::json to_json(const RegressionTree& t) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
  return nodes;
}

inline RegressionTree tree_from_json(const nlohmann::json& j, std::size_t feature_count) {
  RegressionTree t;
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != 5) throw ParseError("gbdt model: tree node must be [feature, threshold, left, right, value]");
    TreeNode n{row[0].get<int>(), row[1].get<double>(), row[2].get<int>(), row[3].get<int>(), row[4].get<double>()};
    t.nodes.push_back(n);
  }
  if (t.nodes.empty()) throw ParseError("gbdt model: empty tree");
  const auto count = static_cast<int>(t.nodes.size());
  for (std::size_t k = 0; k < t.nodes.size(); ++k) {
    const auto& n = t.nodes[k];
    if (n.is_leaf()) {
      if (!std::isfinite(n.value)) throw ValidationError("gbdt model: non-finite leaf value");
      continue;
    }
    if (static_cast<std::size_t>(n.feature) >= feature_count)
      throw ValidationError("gbdt model: split feature " + std::to_string(n.feature) + " out of range");
    if (n.left <= static_cast<int>(k) || n.right <= static_cast<int>(k) || n.left >= count || n.right >= count)
      throw ValidationError("gbdt model: malformed child index");
  }
  return t;
}

inline nlohmann::json to_json(const BinaryGbdt& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) trees.push_back(to_json(t));
  return {{"init", m.init},
          {"learning_rate", m.learning_rate},
          {"degenerate", m.degenerate},
          {"loss_history", m.loss_history},
          {"trees", trees}};
}

inline BinaryGbdt binary_from_json(const nlohmann::json& j, std::size_t feature_count) {
  BinaryGbdt m;
  m.init = j.at("init").get<double>();
  m.learning_rate = j.at("learning_rate").get<double>();
  m.degenerate = j.value("degenerate", false);
  m.loss_history = j.value("loss_history", std::vector<double>{});
  for (const auto& t : j.at("trees")) m.trees.push_back(tree_from_json(t, feature_count));
  return m;
}

}  // namespace gbdt
}  // namespace ttpchain
