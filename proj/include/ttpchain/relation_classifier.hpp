#pragma once

// One-vs-rest boosted-tree classifier for temporal relations between a
// technique pair, plus report-level cross-validation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttpchain/error.hpp"
#include "ttpchain/features.hpp"
#include "ttpchain/gbdt.hpp"
#include "ttpchain/metrics.hpp"
#include "ttpchain/relation.hpp"

namespace ttpchain {

inline constexpr double kDefaultDecisionThreshold = 0.5;

struct TrainConfig {
  std::size_t trees = 200;
  std::size_t max_depth = 3;
  double learning_rate = 0.1;
  double negative_downsample_ratio = 10.0;
  std::uint64_t seed = 0;
  double decision_threshold = kDefaultDecisionThreshold;
  double l2 = 1.0;
  double min_child_weight = 1e-3;
  // Feature groups fed to the trees; the default slots are always used.
  std::set<FeatureGroup> groups = {FeatureGroup::F1, FeatureGroup::F2, FeatureGroup::F3, FeatureGroup::F4};

  void validate() const {
    if (trees < 1) throw ContractViolation("TrainConfig: trees must be >= 1");
    if (max_depth < 1) throw ContractViolation("TrainConfig: max_depth must be >= 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ContractViolation("TrainConfig: learning_rate must be in (0, 1]");
    if (!(negative_downsample_ratio > 0.0)) throw ContractViolation("TrainConfig: negative_downsample_ratio must be > 0");
    if (!(decision_threshold > 0.0 && decision_threshold < 1.0))
      throw ContractViolation("TrainConfig: decision_threshold must be in (0, 1)");
  }

  BoostParams boost_params() const { return {trees, max_depth, learning_rate, l2, min_child_weight}; }
};

inline std::string_view to_string(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::Default: return "default";
    case FeatureGroup::F1: return "f1";
    case FeatureGroup::F2: return "f2";
    case FeatureGroup::F3: return "f3";
    case FeatureGroup::F4: return "f4";
  }
  return "default";
}

// "f1+f2+f4" -> {F1, F2, F4}. "default" alone selects no extra group.
inline std::set<FeatureGroup> parse_feature_groups(std::string_view spec) {
  std::set<FeatureGroup> out;
  std::size_t start = 0;
  while (start <= spec.size()) {
    auto end = spec.find('+', start);
    auto tok = spec.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    if (tok == "f1") out.insert(FeatureGroup::F1);
    else if (tok == "f2") out.insert(FeatureGroup::F2);
    else if (tok == "f3") out.insert(FeatureGroup::F3);
    else if (tok == "f4") out.insert(FeatureGroup::F4);
    else if (tok != "default") throw ValidationError("unknown feature group '" + std::string(tok) + "'");
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

inline std::vector<std::size_t> active_slots(const FeatureLayout& layout, const std::set<FeatureGroup>& groups) {
  std::vector<std::size_t> out;
  for (auto g : {FeatureGroup::Default, FeatureGroup::F1, FeatureGroup::F2, FeatureGroup::F3, FeatureGroup::F4}) {
    if (g != FeatureGroup::Default && !groups.contains(g)) continue;
    for (std::size_t k = 0; k < layout.group_size(g); ++k) out.push_back(layout.group_offset(g) + k);
  }
  return out;
}

struct RelationPrediction {
  std::string report_id;
  TechniquePair pair;
  RelationScores probabilities{};
  RelationSet labels;

  double probability(Relation r) const { return probabilities[index_of(r)]; }
};

struct GbdtEnsemble {
  std::array<BinaryGbdt, 4> models;  // indexed by index_of(Relation)
  std::string layout_version;
  std::size_t feature_count = 0;
  std::vector<std::size_t> features;  // slots the trees may split on
  TrainConfig config;

  const BinaryGbdt& model(Relation r) const { return models[index_of(r)]; }
  friend bool operator==(const GbdtEnsemble& a, const GbdtEnsemble& b) {
    return a.models == b.models && a.layout_version == b.layout_version && a.feature_count == b.feature_count &&
           a.features == b.features;
  }
};

namespace relations {

inline constexpr std::string_view kModelSchema = "ttpchain.gbdt/1";

// Rows whose label set is empty or {NULL}.
inline bool is_null_row(RelationSet s) {
  for (auto r : kPositiveRelations)
    if (s.contains(r)) return false;
  return true;
}

inline std::uint64_t label_seed(std::uint64_t seed, Relation r) {
  // splitmix64 step keyed by label
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index_of(r) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Training rows for one label: every row for NULL; for a positive label all
// non-NULL rows plus at most ratio * positives NULL rows.
inline std::vector<std::size_t> training_rows(std::span<const RelationSet> labels, Relation label, double ratio,
                                              std::uint64_t seed) {
  std::vector<std::size_t> all(labels.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (label == Relation::Null) return all;
  std::vector<std::size_t> kept, nulls;
  std::size_t positives = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    positives += labels[r].contains(label) ? 1 : 0;
    (is_null_row(labels[r]) ? nulls : kept).push_back(r);
  }
  if (positives == 0) return all;
  auto quota = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(positives)));
  std::mt19937_64 rng(label_seed(seed, label));
  auto sampled = gbdt::sample_sorted(std::move(nulls), quota, rng);
  kept.insert(kept.end(), sampled.begin(), sampled.end());
  std::sort(kept.begin(), kept.end());
  return kept;
}

inline GbdtEnsemble train(std::span<const PairFeatureVector> features, std::span<const RelationSet> labels,
                          const TrainConfig& config) {
  config.validate();
  if (features.empty()) throw TrainingError("train: no feature vectors");
  if (features.size() != labels.size()) throw TrainingError("train: features and labels are not aligned");
  const auto& version = features.front().layout_version;
  const auto width = features.front().values.size();
  for (std::size_t r = 0; r < features.size(); ++r) {
    if (features[r].layout_version != version || features[r].values.size() != width)
      throw TrainingError("train: row " + std::to_string(r) + " has a different feature layout");
    for (std::size_t k = 0; k < width; ++k)
      if (std::isnan(features[r].values[k]))
        throw TrainingError("train: NaN feature in row " + std::to_string(r) + ", slot " + std::to_string(k));
  }

  GbdtEnsemble model;
  model.layout_version = version;
  model.feature_count = width;
  model.config = config;
  auto bins_at = version.rfind("bins=");
  if (bins_at != std::string::npos && FeatureLayout(std::stoul(version.substr(bins_at + 5))).total() == width) {
    model.features = active_slots(FeatureLayout(std::stoul(version.substr(bins_at + 5))), config.groups);
  } else {
    model.features.resize(width);
    std::iota(model.features.begin(), model.features.end(), std::size_t{0});
  }

  for (auto label : kAllRelations) {
    auto rows = training_rows(labels, label, config.negative_downsample_ratio, config.seed);
    FeatureMatrix x;
    std::vector<int> y;
    x.reserve(rows.size());
    for (auto r : rows) {
      x.push_back(features[r].values);
      y.push_back(label == Relation::Null ? (is_null_row(labels[r]) ? 1 : 0) : (labels[r].contains(label) ? 1 : 0));
    }
    auto& m = model.models[index_of(label)];
    m = gbdt::fit_binary(x, y, model.features, config.boost_params());
    if (m.degenerate)
      std::cerr << "warning: label " << to_string(label) << " has no "
                << (std::count(y.begin(), y.end(), 1) == 0 ? "positive" : "negative")
                << " training rows; its model is the prior\n";
  }
  return model;
}

inline RelationPrediction predict(const GbdtEnsemble& model, const PairFeatureVector& fv) {
  if (fv.layout_version != model.layout_version || fv.values.size() != model.feature_count)
    throw ContractViolation("predict: feature layout '" + fv.layout_version + "' does not match model layout '" +
                            model.layout_version + "'");
  RelationPrediction out;
  out.report_id = fv.report_id;
  out.pair = fv.pair;
  for (auto label : kAllRelations) out.probabilities[index_of(label)] = model.model(label).probability(fv.values);
  for (auto label : kPositiveRelations)
    if (out.probabilities[index_of(label)] >= model.config.decision_threshold) out.labels.insert(label);
  if (out.labels.empty()) out.labels.insert(Relation::Null);
  return out;
}

inline std::vector<RelationPrediction> predict_all(const GbdtEnsemble& model, std::span<const PairFeatureVector> fvs) {
  std::vector<RelationPrediction> out;
  out.reserve(fvs.size());
  for (const auto& fv : fvs) out.push_back(predict(model, fv));
  return out;
}

// ---- serialization ---------------------------------------------------------

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json groups = nlohmann::json::array();
  for (auto g : c.groups) groups.push_back(std::string(to_string(g)));
  return {{"trees", c.trees},
          {"max_depth", c.max_depth},
          {"learning_rate", c.learning_rate},
          {"negative_downsample_ratio", c.negative_downsample_ratio},
          {"seed", c.seed},
          {"decision_threshold", c.decision_threshold},
          {"l2", c.l2},
          {"min_child_weight", c.min_child_weight},
          {"feature_groups", groups}};
}

// Missing keys keep their defaults.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  c.trees = j.value("trees", c.trees);
  c.max_depth = j.value("max_depth", c.max_depth);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.negative_downsample_ratio = j.value("negative_downsample_ratio", c.negative_downsample_ratio);
  c.seed = j.value("seed", c.seed);
  c.decision_threshold = j.value("decision_threshold", c.decision_threshold);
  c.l2 = j.value("l2", c.l2);
  c.min_child_weight = j.value("min_child_weight", c.min_child_weight);
  if (j.contains("feature_groups")) {
    c.groups.clear();
    for (const auto& g : j.at("feature_groups")) {
      auto parsed = parse_feature_groups(g.get<std::string>());
      c.groups.insert(parsed.begin(), parsed.end());
    }
  }
  c.validate();
  return c;
}

inline nlohmann::json to_json(const GbdtEnsemble& m) {
  nlohmann::json models = nlohmann::json::object();
  for (auto label : kAllRelations) models[std::string(to_string(label))] = gbdt::to_json(m.model(label));
  return {{"schema", kModelSchema},
          {"layout_version", m.layout_version},
          {"feature_count", m.feature_count},
          {"features", m.features},
          {"config", to_json(m.config)},
          {"models", models}};
}

inline GbdtEnsemble ensemble_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kModelSchema)
    throw ParseError("relation model: unsupported schema '" + j.value("schema", "") + "'");
  GbdtEnsemble m;
  m.layout_version = j.at("layout_version").get<std::string>();
  m.feature_count = j.at("feature_count").get<std::size_t>();
  m.features = j.at("features").get<std::vector<std::size_t>>();
  for (auto f : m.features)
    if (f >= m.feature_count) throw ValidationError("relation model: feature index out of range");
  m.config = train_config_from_json(j.at("config"));
  for (auto label : kAllRelations)
    m.models[index_of(label)] = gbdt::binary_from_json(j.at("models").at(std::string(to_string(label))), m.feature_count);
  return m;
}

inline nlohmann::json to_json(const RelationPrediction& p) {
  nlohmann::json probs = nlohmann::json::object();
  for (auto label : kAllRelations) probs[std::string(to_string(label))] = p.probability(label);
  nlohmann::json labels = nlohmann::json::array();
  for (auto label : p.labels.to_vector()) labels.push_back(std::string(to_string(label)));
  return {{"report_id", p.report_id}, {"tx", p.pair.first}, {"ty", p.pair.second}, {"labels", labels},
          {"probabilities", probs}};
}

inline RelationPrediction prediction_from_json(const nlohmann::json& j) {
  RelationPrediction p;
  p.report_id = j.at("report_id").get<std::string>();
  p.pair = {j.at("tx").get<std::string>(), j.at("ty").get<std::string>()};
  for (const auto& l : j.at("labels")) {
    auto r = parse_relation(l.get<std::string>());
    if (!r) throw ParseError("prediction: unknown relation label '" + l.get<std::string>() + "'");
    p.labels.insert(*r);
  }
  if (p.labels.empty() || !p.labels.null_exclusive())
    throw ValidationError("prediction: labels must be non-empty and NULL must be exclusive");
  if (j.contains("probabilities"))
    for (auto label : kAllRelations)
      p.probabilities[index_of(label)] = j.at("probabilities").value(std::string(to_string(label)), 0.0);
  return p;
}

// One prediction per line; blank lines are ignored.
inline std::vector<RelationPrediction> parse_predictions(std::istream& in) {
  std::vector<RelationPrediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(prediction_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("predictions line " + std::to_string(line_no) + ": " + e.what(), 0, line_no);
    } catch (const ValidationError& e) {
      throw ValidationError(std::string(e.what()) + " (line " + std::to_string(line_no) + ")", line_no);
    }
  }
  return out;
}

// ---- cross-validation ------------------------------------------------------

struct CrossValidationReport {
  std::vector<std::vector<std::string>> fold_reports;  // evaluated report ids per fold
  std::vector<MetricReport> folds;
  MetricReport median;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  auto m = v.size() / 2;
  return v.size() % 2 ? v[m] : (v[m - 1] + v[m]) / 2.0;
}

inline MetricReport median_report(std::span<const MetricReport> reps) {
  MetricReport out;
  auto med = [&](auto get) {
    std::vector<double> v;
    for (const auto& r : reps) v.push_back(get(r));
    return median(std::move(v));
  };
  for (std::size_t l = 0; l < 4; ++l) {
    out.per_label[l].precision = med([&](const MetricReport& r) { return r.per_label[l].precision; });
    out.per_label[l].recall = med([&](const MetricReport& r) { return r.per_label[l].recall; });
    out.per_label[l].f1 = med([&](const MetricReport& r) { return r.per_label[l].f1; });
    out.per_label[l].support =
        static_cast<std::size_t>(med([&](const MetricReport& r) { return static_cast<double>(r.per_label[l].support); }));
  }
  out.macro_precision = med([](const MetricReport& r) { return r.macro_precision; });
  out.macro_recall = med([](const MetricReport& r) { return r.macro_recall; });
  out.macro_f1 = med([](const MetricReport& r) { return r.macro_f1; });
  out.positive_macro_precision = med([](const MetricReport& r) { return r.positive_macro_precision; });
  out.positive_macro_recall = med([](const MetricReport& r) { return r.positive_macro_recall; });
  out.positive_macro_f1 = med([](const MetricReport& r) { return r.positive_macro_f1; });
  if (!reps.empty())
    for (const auto& [k, v] : reps.front().p_at_k)
      out.p_at_k[k] = med([&, k = k](const MetricReport& r) { return r.p_at_k.at(k); });
  out.lrap = med([](const MetricReport& r) { return r.lrap; });
  out.ndcg = med([](const MetricReport& r) { return r.ndcg; });
  out.rows = static_cast<std::size_t>(med([](const MetricReport& r) { return static_cast<double>(r.rows); }));
  return out;
}

// Report ids shuffled with the seed, then dealt round-robin into folds.
inline std::map<std::string, std::size_t> assign_folds(std::span<const PairFeatureVector> features, std::size_t folds,
                                                       std::uint64_t seed) {
  std::set<std::string> unique;
  for (const auto& fv : features) unique.insert(fv.report_id);
  if (folds < 2) throw ContractViolation("cross_validate: folds must be >= 2");
  if (unique.size() < folds)
    throw ValidationError("cross_validate: " + std::to_string(unique.size()) + " reports cannot fill " +
                          std::to_string(folds) + " folds");
  std::vector<std::string> ids(unique.begin(), unique.end());
  std::mt19937_64 rng(seed);
  gbdt::shuffle(ids, rng);
  std::map<std::string, std::size_t> out;
  for (std::size_t k = 0; k < ids.size(); ++k) out[ids[k]] = k % folds;
  return out;
}

inline CrossValidationReport cross_validate(std::span<const PairFeatureVector> features,
                                            std::span<const RelationSet> labels, const TrainConfig& config,
                                            std::size_t folds = 5) {
  if (features.size() != labels.size()) throw ContractViolation("cross_validate: features and labels are not aligned");
  auto fold_of = assign_folds(features, folds, config.seed);
  CrossValidationReport out;
  out.fold_reports.resize(folds);
  for (const auto& [id, f] : fold_of) out.fold_reports[f].push_back(id);

  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<PairFeatureVector> train_x, test_x;
    std::vector<RelationSet> train_y, test_y;
    for (std::size_t r = 0; r < features.size(); ++r) {
      bool held_out = fold_of.at(features[r].report_id) == f;
      (held_out ? test_x : train_x).push_back(features[r]);
      (held_out ? test_y : train_y).push_back(labels[r]);
    }
    auto model = train(train_x, train_y, config);
    std::vector<RelationSet> pred;
    std::vector<RelationScores> probs;
    for (const auto& fv : test_x) {
      auto p = predict(model, fv);
      pred.push_back(p.labels);
      probs.push_back(p.probabilities);
    }
    out.folds.push_back(metrics::evaluate(test_y, pred, probs));
  }
  out.median = median_report(out.folds);
  return out;
}

inline nlohmann::json to_json(const CrossValidationReport& cv) {
  nlohmann::json folds = nlohmann::json::array();
  for (std::size_t f = 0; f < cv.folds.size(); ++f) {
    auto j = metrics::to_json(cv.folds[f]);
    j["reports"] = cv.fold_reports[f];
    folds.push_back(std::move(j));
  }
  return {{"aggregate", "median"}, {"median", metrics::to_json(cv.median)}, {"folds", folds}};
}

}  // namespace relations
}  // namespace ttpchain
