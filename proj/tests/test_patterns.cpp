#include <gtest/gtest.h>

#include <random>

#include "support/oracles.hpp"
#include "ttpchain/patterns.hpp"

using namespace ttpchain;

namespace {

RelationPrediction pred(std::string report, std::string tx, std::string ty, RelationSet labels) {
  RelationPrediction p;
  p.report_id = std::move(report);
  p.pair = {std::move(tx), std::move(ty)};
  p.labels = labels;
  return p;
}

CategoryMap standard_map() { return patterns::load_category_map(TTPCHAIN_DATA_DIR "/categories.txt"); }

}  // namespace

TEST(Miner, CountsDistinctReports) {
  using enum Relation;
  std::vector<RelationPrediction> ps{
      pred("r1", "T1566", "T1204", {Before}),
      pred("r1", "T1566", "T1204", {Before}),  // same report twice
      pred("r2", "T1566", "T1204", {Before}),
      pred("r3", "T1204", "T1566", {Before}),  // other direction, not merged
      pred("r3", "T1059", "T1047", {Null}),
  };
  auto out = patterns::mine(ps, 2);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].tx, "T1566");
  EXPECT_EQ(out[0].ty, "T1204");
  EXPECT_EQ(out[0].count, 2u);
  EXPECT_EQ(out[0].report_ids, (std::set<std::string>{"r1", "r2"}));
  EXPECT_EQ(patterns::mine(ps, 1).size(), 2u);
  EXPECT_TRUE(patterns::mine(ps, 3).empty());
  EXPECT_THROW(patterns::mine(ps, 0), ContractViolation);
}

TEST(Miner, SymmetricRelationsMergeOrientations) {
  using enum Relation;
  std::vector<RelationPrediction> ps{pred("r1", "T1105", "T1071", {Concurrent}),
                                     pred("r2", "T1071", "T1105", {Concurrent, Before})};
  auto out = patterns::mine(ps, 2);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].relation, Concurrent);
  EXPECT_EQ(out[0].tx, "T1071");
  EXPECT_EQ(out[0].ty, "T1105");
}

TEST(Miner, OrderIsCountThenKey) {
  using enum Relation;
  std::vector<RelationPrediction> ps;
  for (auto r : {"a", "b", "c"}) ps.push_back(pred(r, "T1002", "T1001", {Before}));
  for (auto r : {"a", "b"}) {
    ps.push_back(pred(r, "T1001", "T1002", {Before}));
    ps.push_back(pred(r, "T1003", "T1001", {SimultaneousOverlap}));
  }
  auto out = patterns::mine(ps, 1);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].count, 3u);
  EXPECT_EQ(out[1].tx, "T1001");
  EXPECT_EQ(out[1].relation, Before);
  EXPECT_EQ(out[2].relation, SimultaneousOverlap);
  EXPECT_EQ(out[2].tx, "T1001");
}

TEST(Miner, MatchesOracleOnRandomPredictions) {
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 200; ++trial) {
    auto ps = oracle::random_predictions(rng);
    std::size_t n = 1 + rng() % 4;
    EXPECT_EQ(oracle::as_map(patterns::mine(ps, n)), oracle::mine(ps, n)) << "trial " << trial;
  }
}

TEST(Miner, HigherSupportIsSubset) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto ps = oracle::random_predictions(rng);
    auto prev = oracle::as_map(patterns::mine(ps, 1));
    for (std::size_t n = 2; n <= 5; ++n) {
      auto now = oracle::as_map(patterns::mine(ps, n));
      for (const auto& [k, v] : now) {
        ASSERT_TRUE(prev.contains(k));
        EXPECT_EQ(prev.at(k), v);
        EXPECT_GE(v.size(), n);
      }
      prev = now;
    }
  }
}

TEST(Miner, InputOrderAndSymmetricOrientationDoNotMatter) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    auto ps = oracle::random_predictions(rng);
    auto base = patterns::mine(ps, 1);
    auto shuffled = ps;
    gbdt::shuffle(shuffled, rng);
    for (auto& p : shuffled)
      if (!p.labels.contains(Relation::Before) && !p.labels.contains(Relation::Null)) std::swap(p.pair.first, p.pair.second);
    EXPECT_EQ(patterns::mine(shuffled, 1), base);
  }
}

TEST(Categories, StandardLookups) {
  auto map = standard_map();
  EXPECT_GT(map.size(), 100u);
  EXPECT_EQ(map.find("T1566", "T1204", Relation::Before), "Baiting towards malicious execution");
  EXPECT_EQ(map.find("T1003", "T1078", Relation::Before), "Lateral movement using OS and Credentials");
  EXPECT_FALSE(map.find("T1204", "T1566", Relation::Before));
  EXPECT_EQ(map.categories().size(), 9u);
  EXPECT_EQ(map.version(), "1");
}

TEST(Categories, CategorizeFallsBack) {
  std::vector<TemporalPattern> ps(1);
  ps[0].tx = "T1566";
  ps[0].ty = "T1204";
  ps[0].relation = Relation::Before;
  auto out = patterns::categorize(ps, CategoryMap{});
  EXPECT_EQ(out[0].category, std::string(kUncategorized));
  out = patterns::categorize(ps, standard_map());
  EXPECT_EQ(out[0].category, "Baiting towards malicious execution");
}

TEST(Categories, SymmetricEntriesAreOrderInsensitive) {
  std::istringstream in("[Comms]\nT1105 T1071 C\n");
  auto map = patterns::parse_category_map(in);
  EXPECT_EQ(map.find("T1071", "T1105", Relation::Concurrent), "Comms");
  EXPECT_EQ(map.find("T1105", "T1071", Relation::Concurrent), "Comms");
  EXPECT_FALSE(map.find("T1105", "T1071", Relation::Before));
}

TEST(Categories, MalformedMapsReportLines) {
  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      patterns::parse_category_map(in);
    } catch (const ParseError& e) {
      return e.line();
    } catch (const ValidationError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("T1566 T1204 B\n"), 1u);
  EXPECT_EQ(line_of("[A]\nT1566 T1204 X\n"), 2u);
  EXPECT_EQ(line_of("[A]\nT1566 T1204 NULL\n"), 2u);
  EXPECT_EQ(line_of("[A]\n\nT1566 T1204\n"), 3u);
  EXPECT_EQ(line_of("[A\n"), 1u);
  EXPECT_EQ(line_of("[A]\nT1566 T1204 B\n[B]\nT1566 T1204 B\n"), 4u);
  EXPECT_EQ(line_of("[A]\nX1 T1204 B\n"), 2u);
}

TEST(Export, CsvRoundTrip) {
  std::mt19937_64 rng(8);
  auto ps = patterns::categorize(patterns::mine(oracle::random_predictions(rng), 1), standard_map());
  TemporalPattern odd;
  odd.tx = "T1001";
  odd.ty = "T1002";
  odd.count = 2;
  odd.report_ids = {"a,b", "c\"d"};
  odd.category = "Needs, \"quoting\"";
  ps.push_back(odd);
  auto text = patterns::to_csv(ps);
  EXPECT_EQ(patterns::parse_csv(text), ps);
  EXPECT_THROW(patterns::parse_csv("a,b\n"), ParseError);
  EXPECT_THROW(patterns::parse_csv(""), ParseError);
}

TEST(Export, DotHasOneEdgePerPattern) {
  using enum Relation;
  std::vector<RelationPrediction> ps{pred("r1", "T1566", "T1204", {Before}), pred("r2", "T1566", "T1204", {Before})};
  auto dot = patterns::export_patterns(patterns::mine(ps, 2), "dot");
  std::size_t edges = 0;
  for (auto at = dot.find("->"); at != std::string::npos; at = dot.find("->", at + 2)) ++edges;
  EXPECT_EQ(edges, 1u);
  EXPECT_NE(dot.find("\"T1566\" -> \"T1204\""), std::string::npos);
  EXPECT_EQ(dot.find("dashed"), std::string::npos);
}

TEST(Export, EmptyOutputsAreValid) {
  std::vector<TemporalPattern> none;
  EXPECT_EQ(patterns::export_patterns(none, "csv"), std::string(patterns::kCsvHeader) + "\n");
  auto j = nlohmann::json::parse(patterns::export_patterns(none, "json"));
  EXPECT_TRUE(j["patterns"].empty());
  EXPECT_EQ(patterns::export_patterns(none, "dot").find("->"), std::string::npos);
  EXPECT_THROW(patterns::export_patterns(none, "xml"), ValidationError);
}

TEST(Export, JsonCarriesCategoryOrNull) {
  TemporalPattern p;
  p.tx = "T1566";
  p.ty = "T1204";
  p.count = 3;
  auto j = patterns::to_json(p);
  EXPECT_TRUE(j["category"].is_null());
  p.category = "x";
  EXPECT_EQ(patterns::to_json(p)["category"], "x");
}
