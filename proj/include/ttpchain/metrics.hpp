#pragma once

// Evaluation primitives for multi-label relation prediction.
//
// Ranking metrics take a relevance matrix (rows x labels, 0/1) and a score
// matrix of the same shape. Tie handling:
//   LRAP  optimistic: a label's rank is 1 + the number of labels scoring
//         strictly higher, and the true labels counted at or above it are
//         itself plus the true labels scoring strictly higher.
//   NDCG  ties keep label order.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <map>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ttpchain/error.hpp"
#include "ttpchain/relation.hpp"

namespace ttpchain {

using RelevanceMatrix = std::vector<std::vector<int>>;
using ScoreMatrix = std::vector<std::vector<double>>;
using RelationScores = std::array<double, 4>;  // indexed by index_of(Relation)

struct LabelPrf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct MetricReport {
  std::array<LabelPrf, 4> per_label{};
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  // Same means over BEFORE, SIMULTANEOUS_OVERLAP and CONCURRENT only.
  double positive_macro_precision = 0.0, positive_macro_recall = 0.0, positive_macro_f1 = 0.0;
  std::map<std::size_t, double> p_at_k;
  double lrap = 0.0;
  double ndcg = 0.0;
  std::size_t rows = 0;
};

namespace metrics {

namespace detail {

inline double safe_div(double a, double b) { return b > 0.0 ? a / b : 0.0; }

inline void check_shape(const RelevanceMatrix& truth, const ScoreMatrix& scores) {
  if (truth.size() != scores.size()) throw ContractViolation("metrics: row count mismatch");
  for (std::size_t r = 0; r < truth.size(); ++r)
    if (truth[r].size() != scores[r].size()) throw ContractViolation("metrics: label count mismatch in row " + std::to_string(r));
}

}  // namespace detail

inline LabelPrf binary_prf(std::size_t tp, std::size_t fp, std::size_t fn) {
  LabelPrf out;
  out.precision = detail::safe_div(static_cast<double>(tp), static_cast<double>(tp + fp));
  out.recall = detail::safe_div(static_cast<double>(tp), static_cast<double>(tp + fn));
  out.f1 = detail::safe_div(2.0 * out.precision * out.recall, out.precision + out.recall);
  out.support = tp + fn;
  return out;
}

// Per-label P/R/F over the four relation labels with unweighted macro means.
inline MetricReport macro_prf(std::span<const RelationSet> truth, std::span<const RelationSet> pred) {
  if (truth.size() != pred.size()) throw ContractViolation("macro_prf: truth and prediction lengths differ");
  MetricReport rep;
  rep.rows = truth.size();
  for (auto label : kAllRelations) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t r = 0; r < truth.size(); ++r) {
      bool t = truth[r].contains(label), p = pred[r].contains(label);
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
    rep.per_label[index_of(label)] = binary_prf(tp, fp, fn);
  }
  for (auto label : kAllRelations) {
    const auto& l = rep.per_label[index_of(label)];
    rep.macro_precision += l.precision / 4.0;
    rep.macro_recall += l.recall / 4.0;
    rep.macro_f1 += l.f1 / 4.0;
  }
  for (auto label : kPositiveRelations) {
    const auto& l = rep.per_label[index_of(label)];
    rep.positive_macro_precision += l.precision / 3.0;
    rep.positive_macro_recall += l.recall / 3.0;
    rep.positive_macro_f1 += l.f1 / 3.0;
  }
  return rep;
}

// Fraction of relevant items among the top min(k, n) by descending score;
// ties keep input order.
inline double precision_at_k(std::span<const std::pair<double, bool>> scored, std::size_t k) {
  if (k < 1) throw ContractViolation("precision_at_k: k must be >= 1");
  if (scored.empty()) return 0.0;
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scored[a].first > scored[b].first; });
  std::size_t top = std::min(k, scored.size()), hits = 0;
  for (std::size_t r = 0; r < top; ++r) hits += scored[order[r]].second ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(top);
}

// Rows without a true label are skipped; the result is 0 when every row is.
inline double lrap(const RelevanceMatrix& truth, const ScoreMatrix& scores) {
  detail::check_shape(truth, scores);
  double total = 0.0;
  std::size_t counted = 0, skipped = 0;
  for (std::size_t r = 0; r < truth.size(); ++r) {
    const auto& t = truth[r];
    const auto& s = scores[r];
    std::size_t n_true = static_cast<std::size_t>(std::count_if(t.begin(), t.end(), [](int v) { return v != 0; }));
    if (n_true == 0) {
      ++skipped;
      continue;
    }
    double row = 0.0;
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (!t[j]) continue;
      std::size_t rank = 1, above_true = 1;
      for (std::size_t k = 0; k < t.size(); ++k)
        if (s[k] > s[j]) {
          ++rank;
          above_true += t[k] ? 1 : 0;
        }
      row += static_cast<double>(above_true) / static_cast<double>(rank);
    }
    total += row / static_cast<double>(n_true);
    ++counted;
  }
  if (skipped > 0) std::cerr << "warning: lrap skipped " << skipped << " row(s) without true labels\n";
  return counted ? total / static_cast<double>(counted) : 0.0;
}

// Binary-relevance NDCG averaged over all rows; rows with no relevant label
// contribute 0.
inline double ndcg(const RelevanceMatrix& truth, const ScoreMatrix& scores) {
  detail::check_shape(truth, scores);
  if (truth.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < truth.size(); ++r) {
    const auto& t = truth[r];
    const auto& s = scores[r];
    std::vector<std::size_t> order(t.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    double dcg = 0.0, idcg = 0.0;
    std::size_t n_true = 0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      if (t[order[pos]]) dcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
      n_true += t[pos] ? 1 : 0;
    }
    for (std::size_t pos = 0; pos < n_true; ++pos) idcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
    total += idcg > 0.0 ? dcg / idcg : 0.0;
  }
  return total / static_cast<double>(truth.size());
}

template <typename Label>
double cohen_kappa(std::span<const Label> a, std::span<const Label> b) {
  if (a.size() != b.size()) throw ContractViolation("cohen_kappa: lists differ in length");
  if (a.empty()) throw ValidationError("cohen_kappa: empty input");
  const double n = static_cast<double>(a.size());
  std::map<Label, double> ca, cb;
  double agree = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ca[a[k]] += 1.0;
    cb[b[k]] += 1.0;
    agree += a[k] == b[k] ? 1.0 : 0.0;
  }
  double po = agree / n, pe = 0.0;
  for (const auto& [label, count] : ca) {
    auto it = cb.find(label);
    if (it != cb.end()) pe += (count / n) * (it->second / n);
  }
  if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

template <typename Label>
double cohen_kappa(const std::vector<Label>& a, const std::vector<Label>& b) {
  return cohen_kappa(std::span<const Label>(a), std::span<const Label>(b));
}

inline RelevanceMatrix relevance(std::span<const RelationSet> truth) {
  RelevanceMatrix m;
  m.reserve(truth.size());
  for (const auto& t : truth) {
    std::vector<int> row(4, 0);
    for (auto r : kAllRelations) row[index_of(r)] = t.contains(r) ? 1 : 0;
    m.push_back(std::move(row));
  }
  return m;
}

inline ScoreMatrix score_matrix(std::span<const RelationScores> probs) {
  ScoreMatrix m;
  m.reserve(probs.size());
  for (const auto& p : probs) m.emplace_back(p.begin(), p.end());
  return m;
}

// P@k pooled per label (every row's probability for that label, relevant
// when the label is true), averaged over the four labels.
inline double pooled_precision_at_k(std::span<const RelationSet> truth, std::span<const RelationScores> probs,
                                    std::size_t k) {
  if (truth.size() != probs.size()) throw ContractViolation("pooled_precision_at_k: length mismatch");
  double sum = 0.0;
  for (auto label : kAllRelations) {
    std::vector<std::pair<double, bool>> pool;
    pool.reserve(truth.size());
    for (std::size_t r = 0; r < truth.size(); ++r) pool.emplace_back(probs[r][index_of(label)], truth[r].contains(label));
    sum += precision_at_k(pool, k);
  }
  return sum / 4.0;
}

inline constexpr std::array<std::size_t, 2> kDefaultPrecisionCutoffs = {50, 100};

inline MetricReport evaluate(std::span<const RelationSet> truth, std::span<const RelationSet> pred,
                             std::span<const RelationScores> probs,
                             std::span<const std::size_t> cutoffs = kDefaultPrecisionCutoffs) {
  if (truth.size() != probs.size()) throw ContractViolation("evaluate: probability rows do not match truth");
  auto rep = macro_prf(truth, pred);
  for (auto k : cutoffs) rep.p_at_k[k] = pooled_precision_at_k(truth, probs, k);
  auto rel = relevance(truth);
  auto sc = score_matrix(probs);
  rep.lrap = lrap(rel, sc);
  rep.ndcg = ndcg(rel, sc);
  return rep;
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json per_label = nlohmann::json::object();
  for (auto label : kAllRelations) {
    const auto& l = r.per_label[index_of(label)];
    per_label[std::string(to_string(label))] = {
        {"P", l.precision}, {"R", l.recall}, {"F", l.f1}, {"support", l.support}};
  }
  nlohmann::json pk = nlohmann::json::object();
  for (const auto& [k, v] : r.p_at_k) pk["P@" + std::to_string(k)] = v;
  return {{"rows", r.rows},
          {"per_label", per_label},
          {"macro_avg", {{"P", r.macro_precision}, {"R", r.macro_recall}, {"F", r.macro_f1}}},
          {"positive_macro_avg",
           {{"P", r.positive_macro_precision}, {"R", r.positive_macro_recall}, {"F", r.positive_macro_f1}}},
          {"precision_at_k", pk},
          {"precision_at_k_pooling", "per-label pool, macro mean over the four labels"},
          {"LRAP", r.lrap},
          {"NDCG", r.ndcg}};
}

}  // namespace metrics
}  // namespace ttpchain
