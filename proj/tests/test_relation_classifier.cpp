#include <gtest/gtest.h>

#include <cmath>

#include "support/datasets.hpp"
#include "ttpchain/relation_classifier.hpp"

using namespace ttpchain;

namespace {

TrainConfig quick() {
  TrainConfig c;
  c.trees = 25;
  c.seed = 11;
  return c;
}

}  // namespace

TEST(RelationClassifier, SeparableBeforeIsLearned) {
  auto d = datasets::separable(1);
  auto m = relations::train(d.rows, d.labels, quick());
  std::vector<RelationSet> pred;
  for (const auto& fv : d.rows) pred.push_back(relations::predict(m, fv).labels);
  auto rep = metrics::macro_prf(d.labels, pred);
  EXPECT_EQ(rep.per_label[index_of(Relation::Before)].f1, 1.0);
  EXPECT_EQ(rep.per_label[index_of(Relation::Null)].f1, 1.0);
  for (const auto& p : pred) EXPECT_TRUE(p.null_exclusive());
}

TEST(RelationClassifier, HeldOutReportsAreClassified) {
  auto train = datasets::separable(2, 12);
  auto test = datasets::separable(3, 4);
  auto m = relations::train(train.rows, train.labels, quick());
  for (std::size_t r = 0; r < test.rows.size(); ++r)
    EXPECT_EQ(relations::predict(m, test.rows[r]).labels, test.labels[r]) << "row " << r;
}

TEST(RelationClassifier, AllNullTrainingPredictsNull) {
  auto d = datasets::separable(4, 3);
  for (auto& l : d.labels) l = RelationSet{Relation::Null};
  auto m = relations::train(d.rows, d.labels, quick());
  for (auto label : kPositiveRelations) EXPECT_TRUE(m.model(label).degenerate);
  for (const auto& fv : d.rows) EXPECT_EQ(relations::predict(m, fv).labels, RelationSet{Relation::Null});
}

TEST(RelationClassifier, TrainingIsDeterministic) {
  auto d = datasets::separable(5);
  auto a = relations::train(d.rows, d.labels, quick());
  auto b = relations::train(d.rows, d.labels, quick());
  EXPECT_TRUE(a == b);
  EXPECT_EQ(relations::to_json(a).dump(), relations::to_json(b).dump());
}

TEST(RelationClassifier, NanFeatureNamesRowAndSlot) {
  auto d = datasets::separable(6, 2);
  d.rows[7].values[3] = std::nan("");
  try {
    relations::train(d.rows, d.labels, quick());
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("row 7"), std::string::npos) << msg;
    EXPECT_NE(msg.find("slot 3"), std::string::npos) << msg;
  }
}

TEST(RelationClassifier, MisalignedOrEmptyInputIsRejected) {
  auto d = datasets::separable(6, 2);
  std::vector<RelationSet> short_labels(d.labels.begin(), d.labels.end() - 1);
  EXPECT_THROW(relations::train(d.rows, short_labels, quick()), TrainingError);
  EXPECT_THROW(relations::train(std::vector<PairFeatureVector>{}, std::vector<RelationSet>{}, quick()), TrainingError);
  auto bad = quick();
  bad.decision_threshold = 1.0;
  EXPECT_THROW(relations::train(d.rows, d.labels, bad), ContractViolation);
}

TEST(RelationClassifier, LayoutMismatchAtPrediction) {
  auto d = datasets::separable(7, 2);
  auto m = relations::train(d.rows, d.labels, quick());
  auto fv = d.rows.front();
  fv.layout_version = FeatureLayout(5).version();
  EXPECT_THROW(relations::predict(m, fv), ContractViolation);
  fv = d.rows.front();
  fv.values.pop_back();
  EXPECT_THROW(relations::predict(m, fv), ContractViolation);
}

TEST(RelationClassifier, FeatureGroupsRestrictSplits) {
  auto d = datasets::separable(8, 4);
  auto c = quick();
  c.groups = parse_feature_groups("f2+f3");
  auto m = relations::train(d.rows, d.labels, c);
  FeatureLayout layout;
  auto allowed = active_slots(layout, c.groups);
  EXPECT_EQ(m.features, allowed);
  std::set<std::size_t> ok(allowed.begin(), allowed.end());
  for (auto label : kAllRelations)
    for (const auto& t : m.model(label).trees)
      for (const auto& n : t.nodes)
        if (!n.is_leaf()) {
          EXPECT_TRUE(ok.contains(static_cast<std::size_t>(n.feature)));
        }
}

TEST(RelationClassifier, ParseFeatureGroups) {
  using enum FeatureGroup;
  EXPECT_EQ(parse_feature_groups("f1+f2+f4"), (std::set<FeatureGroup>{F1, F2, F4}));
  EXPECT_TRUE(parse_feature_groups("default").empty());
  EXPECT_THROW(parse_feature_groups("f1+f9"), ValidationError);
  FeatureLayout layout(10);
  EXPECT_EQ(active_slots(layout, {}).size(), 10u);
  EXPECT_EQ(active_slots(layout, {F1, F2, F3, F4}).size(), layout.total());
  EXPECT_EQ(active_slots(layout, {F3}).size(), 20u);
}

TEST(RelationClassifier, NegativeDownsampling) {
  using enum Relation;
  std::vector<RelationSet> labels;
  for (int k = 0; k < 100; ++k) labels.push_back(k < 3 ? RelationSet{Before} : RelationSet{Null});
  labels.push_back({Concurrent});
  auto rows = relations::training_rows(labels, Before, 10.0, 1);
  // 3 positives + 1 other non-null row + 30 sampled null rows
  EXPECT_EQ(rows.size(), 34u);
  EXPECT_TRUE(std::is_sorted(rows.begin(), rows.end()));
  for (std::size_t k : {0u, 1u, 2u, 100u}) EXPECT_TRUE(std::binary_search(rows.begin(), rows.end(), k));
  EXPECT_EQ(rows, relations::training_rows(labels, Before, 10.0, 1));
  EXPECT_EQ(relations::training_rows(labels, Null, 10.0, 1).size(), labels.size());
  // ratio large enough keeps every row
  EXPECT_EQ(relations::training_rows(labels, Before, 1000.0, 1).size(), labels.size());
  // a label without positives keeps every row
  EXPECT_EQ(relations::training_rows(labels, SimultaneousOverlap, 10.0, 1).size(), labels.size());
}

TEST(CrossValidation, FoldsPartitionReports) {
  auto d = datasets::separable(9, 10);
  auto folds = relations::assign_folds(d.rows, 5, 3);
  EXPECT_EQ(folds.size(), 10u);
  std::map<std::size_t, int> per_fold;
  for (const auto& [id, f] : folds) ++per_fold[f];
  EXPECT_EQ(per_fold.size(), 5u);
  for (const auto& [f, n] : per_fold) EXPECT_EQ(n, 2);
  EXPECT_EQ(folds, relations::assign_folds(d.rows, 5, 3));
  EXPECT_THROW(relations::assign_folds(d.rows, 11, 3), ValidationError);
  EXPECT_THROW(relations::assign_folds(d.rows, 1, 3), ContractViolation);
}

TEST(CrossValidation, MedianOfSeparableFolds) {
  auto d = datasets::separable(10, 15);
  auto cv = relations::cross_validate(d.rows, d.labels, quick(), 5);
  ASSERT_EQ(cv.folds.size(), 5u);
  std::set<std::string> seen;
  for (const auto& f : cv.fold_reports) {
    EXPECT_EQ(f.size(), 3u);
    seen.insert(f.begin(), f.end());
  }
  EXPECT_EQ(seen.size(), 15u);
  EXPECT_GE(cv.median.per_label[index_of(Relation::Before)].f1, 0.9);
  EXPECT_GE(cv.median.per_label[index_of(Relation::Null)].f1, 0.9);
  auto j = relations::to_json(cv);
  EXPECT_EQ(j["aggregate"], "median");
  EXPECT_EQ(j["folds"].size(), 5u);
}

TEST(CrossValidation, MedianHelper) {
  EXPECT_EQ(relations::median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(relations::median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_EQ(relations::median({}), 0.0);
}

TEST(RelationSerialization, ModelRoundTrip) {
  auto d = datasets::separable(12, 4);
  auto m = relations::train(d.rows, d.labels, quick());
  auto text = relations::to_json(m).dump();
  auto back = relations::ensemble_from_json(nlohmann::json::parse(text));
  EXPECT_TRUE(back == m);
  EXPECT_EQ(relations::to_json(back).dump(), text);
  for (const auto& fv : d.rows)
    EXPECT_EQ(relations::predict(back, fv).probabilities, relations::predict(m, fv).probabilities);
  auto j = nlohmann::json::parse(text);
  j["schema"] = "x";
  EXPECT_THROW(relations::ensemble_from_json(j), ParseError);
}

TEST(RelationSerialization, PredictionLines) {
  std::istringstream in(
      R"({"report_id":"r1","tx":"T1566","ty":"T1204","labels":["BEFORE"],"probabilities":{"BEFORE":0.9}})"
      "\n\n"
      R"({"report_id":"r1","tx":"T1204","ty":"T1566","labels":["NULL"]})"
      "\n");
  auto preds = relations::parse_predictions(in);
  ASSERT_EQ(preds.size(), 2u);
  EXPECT_EQ(preds[0].labels, RelationSet{Relation::Before});
  EXPECT_EQ(preds[0].probability(Relation::Before), 0.9);
  auto again = relations::prediction_from_json(relations::to_json(preds[0]));
  EXPECT_EQ(again.labels, preds[0].labels);
  EXPECT_EQ(again.pair, preds[0].pair);

  std::istringstream bad_label(R"({"report_id":"r","tx":"a","ty":"b","labels":["NULL","BEFORE"]})");
  try {
    relations::parse_predictions(bad_label);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
  std::istringstream bad_json("\n{oops\n");
  try {
    relations::parse_predictions(bad_json);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}
