#include <gtest/gtest.h>

#include <random>

#include "support/oracles.hpp"
#include "ttpchain/metrics.hpp"

using namespace ttpchain;

TEST(Metrics, PrecisionAtKByHand) {
  std::vector<std::pair<double, bool>> items{{0.9, true}, {0.8, false}, {0.7, true}, {0.1, false}};
  EXPECT_NEAR(metrics::precision_at_k(items, 3), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(metrics::precision_at_k(items, 1), 1.0, 1e-15);
  // k beyond n uses n
  EXPECT_NEAR(metrics::precision_at_k(items, 50), 0.5, 1e-15);
  EXPECT_EQ(metrics::precision_at_k({}, 3), 0.0);
  EXPECT_THROW(metrics::precision_at_k(items, 0), ContractViolation);
}

TEST(Metrics, PrecisionAtKTiesKeepInputOrder) {
  std::vector<std::pair<double, bool>> items{{0.5, false}, {0.5, true}};
  EXPECT_EQ(metrics::precision_at_k(items, 1), 0.0);
}

TEST(Metrics, LrapByHand) {
  RelevanceMatrix t{{0, 1, 0, 0}};
  ScoreMatrix s{{0.9, 0.8, 0.1, 0.0}};
  EXPECT_NEAR(metrics::lrap(t, s), 0.5, 1e-15);
  // two true labels ranked 1 and 3: (1/1 + 2/3) / 2
  RelevanceMatrix t2{{1, 0, 1, 0}};
  ScoreMatrix s2{{0.9, 0.8, 0.7, 0.0}};
  EXPECT_NEAR(metrics::lrap(t2, s2), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
}

TEST(Metrics, LrapTiesAreOptimistic) {
  RelevanceMatrix t{{0, 1}};
  ScoreMatrix s{{0.5, 0.5}};
  EXPECT_EQ(metrics::lrap(t, s), 1.0);
}

TEST(Metrics, LrapSkipsRowsWithoutTrueLabels) {
  RelevanceMatrix t{{0, 0}, {1, 0}};
  ScoreMatrix s{{0.1, 0.9}, {0.9, 0.1}};
  EXPECT_EQ(metrics::lrap(t, s), 1.0);
  RelevanceMatrix none{{0, 0}};
  ScoreMatrix s1{{0.1, 0.2}};
  EXPECT_EQ(metrics::lrap(none, s1), 0.0);
}

TEST(Metrics, NdcgByHand) {
  RelevanceMatrix t{{0, 1, 0}};
  ScoreMatrix s{{0.9, 0.8, 0.1}};
  EXPECT_NEAR(metrics::ndcg(t, s), 1.0 / std::log2(3.0), 1e-15);
  // a row without relevant labels counts as 0
  RelevanceMatrix t2{{0, 1, 0}, {0, 0, 0}};
  ScoreMatrix s2{{0.1, 0.9, 0.2}, {0.3, 0.2, 0.1}};
  EXPECT_NEAR(metrics::ndcg(t2, s2), 0.5, 1e-15);
}

TEST(Metrics, ShapeMismatchIsRejected) {
  RelevanceMatrix t{{0, 1}};
  ScoreMatrix s{{0.1}};
  EXPECT_THROW(metrics::lrap(t, s), ContractViolation);
  EXPECT_THROW(metrics::ndcg(t, ScoreMatrix{}), ContractViolation);
}

TEST(Metrics, KappaByHand) {
  std::vector<int> a{1, 1, 0, 0}, b{1, 0, 1, 0};
  EXPECT_NEAR(metrics::cohen_kappa(a, b), 0.0, 1e-15);
  std::vector<int> c{1, 1, 1, 0, 0, 0}, d{1, 1, 0, 0, 0, 1};
  EXPECT_NEAR(metrics::cohen_kappa(c, d), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(metrics::cohen_kappa(c, c), 1.0);
  std::vector<int> same{2, 2, 2};
  EXPECT_EQ(metrics::cohen_kappa(same, same), 1.0);
  std::vector<int> empty;
  EXPECT_THROW(metrics::cohen_kappa(empty, empty), ValidationError);
  EXPECT_THROW(metrics::cohen_kappa(a, c), ContractViolation);
}

TEST(Metrics, KappaIsSymmetricAndBounded) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + rng() % 40;
    std::vector<int> a(n), b(n);
    for (std::size_t k = 0; k < n; ++k) {
      a[k] = static_cast<int>(rng() % 3);
      b[k] = static_cast<int>(rng() % 3);
    }
    double k1 = metrics::cohen_kappa(a, b), k2 = metrics::cohen_kappa(b, a);
    EXPECT_NEAR(k1, k2, 1e-12);
    EXPECT_LE(k1, 1.0 + 1e-12);
    EXPECT_GE(k1, -1.0 - 1e-12);
  }
}

TEST(Metrics, MacroPrfByHand) {
  using enum Relation;
  std::vector<RelationSet> truth{{Before}, {Before}, {Null}, {SimultaneousOverlap, Concurrent}};
  std::vector<RelationSet> pred{{Before}, {Null}, {Null}, {SimultaneousOverlap}};
  auto r = metrics::macro_prf(truth, pred);
  const auto& b = r.per_label[index_of(Before)];
  EXPECT_EQ(b.precision, 1.0);
  EXPECT_EQ(b.recall, 0.5);
  EXPECT_NEAR(b.f1, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(b.support, 2u);
  const auto& n = r.per_label[index_of(Null)];
  EXPECT_EQ(n.precision, 0.5);
  EXPECT_EQ(n.recall, 1.0);
  EXPECT_EQ(r.per_label[index_of(Concurrent)].f1, 0.0);
  EXPECT_EQ(r.per_label[index_of(SimultaneousOverlap)].f1, 1.0);
  EXPECT_NEAR(r.macro_f1, 7.0 / 12.0, 1e-15);
  EXPECT_NEAR(r.positive_macro_f1, 5.0 / 9.0, 1e-15);
  EXPECT_EQ(r.rows, 4u);
}

TEST(Metrics, PooledPrecisionAveragesLabels) {
  using enum Relation;
  std::vector<RelationSet> truth{{Before}, {Null}};
  std::vector<RelationScores> probs{{0.9, 0.1, 0.1, 0.2}, {0.2, 0.1, 0.1, 0.8}};
  // Before pool: top is row 0 (true). Null pool: top is row 1 (true).
  // Overlap/concurrent pools have no true rows.
  EXPECT_NEAR(metrics::pooled_precision_at_k(truth, probs, 1), 0.5, 1e-15);
}

TEST(Metrics, EvaluateSerializesEveryField) {
  using enum Relation;
  std::vector<RelationSet> truth{{Before}, {Null}};
  std::vector<RelationScores> probs{{0.9, 0.1, 0.1, 0.2}, {0.2, 0.1, 0.1, 0.8}};
  auto rep = metrics::evaluate(truth, truth, probs);
  auto j = metrics::to_json(rep);
  EXPECT_EQ(j["per_label"]["BEFORE"]["F"], 1.0);
  EXPECT_TRUE(j["precision_at_k"].contains("P@50"));
  EXPECT_TRUE(j["precision_at_k"].contains("P@100"));
  EXPECT_EQ(j["LRAP"], 1.0);
  EXPECT_EQ(j["NDCG"], 1.0);
}

namespace {

RelevanceMatrix random_truth(std::mt19937_64& rng, std::size_t rows, std::size_t labels) {
  RelevanceMatrix t(rows, std::vector<int>(labels));
  for (auto& row : t)
    for (auto& v : row) v = static_cast<int>(rng() % 2);
  return t;
}

ScoreMatrix random_scores(std::mt19937_64& rng, std::size_t rows, std::size_t labels) {
  ScoreMatrix s(rows, std::vector<double>(labels));
  // coarse values so that ties are common
  for (auto& row : s)
    for (auto& v : row) v = static_cast<double>(rng() % 5) / 4.0;
  return s;
}

}  // namespace

TEST(Metrics, RankingMatchesOracleOnRandomInstances) {
  std::mt19937_64 rng(2718);
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t rows = 1 + rng() % 20, labels = 1 + rng() % 4;
    auto t = random_truth(rng, rows, labels);
    auto s = random_scores(rng, rows, labels);
    EXPECT_NEAR(metrics::lrap(t, s), oracle::lrap(t, s), 1e-12);
    EXPECT_NEAR(metrics::ndcg(t, s), oracle::ndcg(t, s), 1e-12);
    std::vector<std::pair<double, bool>> pool;
    for (std::size_t r = 0; r < rows; ++r) pool.emplace_back(s[r][0], t[r][0] != 0);
    for (std::size_t k : {1u, 3u, 5u, 50u})
      EXPECT_NEAR(metrics::precision_at_k(pool, k), oracle::precision_at_k(pool, k), 1e-12);
  }
}

TEST(Metrics, RankingMetricsAreBounded) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    auto t = random_truth(rng, 5, 4);
    auto s = random_scores(rng, 5, 4);
    for (double v : {metrics::lrap(t, s), metrics::ndcg(t, s)}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0 + 1e-12);
    }
  }
}

TEST(Metrics, PerfectScoresGiveOne) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto t = random_truth(rng, 6, 4);
    t[0][0] = 1;
    ScoreMatrix s;
    for (const auto& row : t) s.emplace_back(row.begin(), row.end());
    EXPECT_EQ(metrics::lrap(t, s), 1.0);
  }
}
