#pragma once

// Stage functions shared by the command-line tool: configuration, artifact
// I/O and the end-to-end run.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ttpchain/attack_kb.hpp"
#include "ttpchain/corpus.hpp"
#include "ttpchain/ctfidf.hpp"
#include "ttpchain/embeddings.hpp"
#include "ttpchain/error.hpp"
#include "ttpchain/features.hpp"
#include "ttpchain/patterns.hpp"
#include "ttpchain/relation_classifier.hpp"

namespace ttpchain {

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr std::size_t kDefaultMinExamples = 20;

// Raised by a pipeline stage; carries the stage name for the exit message.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct PipelineConfig {
  std::filesystem::path stix;
  std::filesystem::path reports;
  std::optional<std::filesystem::path> annotations;
  std::optional<std::filesystem::path> vectors;
  std::optional<std::filesystem::path> categories;
  std::optional<std::filesystem::path> extra_mappings;
  std::filesystem::path out_dir = "out";
  double technique_threshold = kDefaultTechniqueThreshold;
  std::size_t min_examples = kDefaultMinExamples;
  std::size_t apriori_bins = kDefaultAprioriBins;
  std::size_t min_support = kDefaultMinSupport;
  std::size_t workers = 0;  // 0 = hardware concurrency
  std::string export_format = "dot";
  TrainConfig train;

  void validate() const {
    if (!(technique_threshold > 0.0 && technique_threshold <= 1.0))
      throw ValidationError("config: technique_threshold must be in (0, 1]");
    if (min_examples < 1) throw ValidationError("config: min_examples must be >= 1");
    if (apriori_bins < 1) throw ValidationError("config: apriori_bins must be >= 1");
    if (min_support < 1) throw ValidationError("config: min_support must be >= 1");
    patterns::parse_export_format(export_format);
    train.validate();
  }
};

namespace pipeline {

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int k = 15; k >= 0; --k, v >>= 4) out[static_cast<std::size_t>(k)] = digits[v & 0xF];
  return out;
}

inline nlohmann::json to_json(const PipelineConfig& c) {
  auto opt = [](const std::optional<std::filesystem::path>& p) {
    return p ? nlohmann::json(p->generic_string()) : nlohmann::json(nullptr);
  };
  return {{"stix", c.stix.generic_string()},
          {"reports", c.reports.generic_string()},
          {"annotations", opt(c.annotations)},
          {"vectors", opt(c.vectors)},
          {"categories", opt(c.categories)},
          {"extra_mappings", opt(c.extra_mappings)},
          {"out_dir", c.out_dir.generic_string()},
          {"technique_threshold", c.technique_threshold},
          {"min_examples", c.min_examples},
          {"apriori_bins", c.apriori_bins},
          {"min_support", c.min_support},
          {"export_format", c.export_format},
          {"train", relations::to_json(c.train)}};
}

// Hash of the settings that change artifact contents; the output directory
// and worker count do not.
inline std::string config_hash(const PipelineConfig& c) {
  auto j = to_json(c);
  j.erase("out_dir");
  return hex64(fnv1a64(j.dump()));
}

// Relative paths in the file resolve against the file's directory.
inline PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  PipelineConfig c;
  auto path = [&](const char* key) -> std::optional<std::filesystem::path> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    std::filesystem::path p = j.at(key).get<std::string>();
    return p.is_absolute() || base.empty() ? p : base / p;
  };
  if (auto p = path("stix")) c.stix = *p;
  if (auto p = path("reports")) c.reports = *p;
  c.annotations = path("annotations");
  c.vectors = path("vectors");
  c.categories = path("categories");
  c.extra_mappings = path("extra_mappings");
  if (auto p = path("out_dir")) c.out_dir = *p;
  c.technique_threshold = j.value("technique_threshold", c.technique_threshold);
  c.min_examples = j.value("min_examples", c.min_examples);
  c.apriori_bins = j.value("apriori_bins", c.apriori_bins);
  c.min_support = j.value("min_support", c.min_support);
  c.workers = j.value("workers", c.workers);
  c.export_format = j.value("export_format", c.export_format);
  if (j.contains("train")) c.train = relations::train_config_from_json(j.at("train"));
  if (j.contains("seed")) c.train.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  auto text = corpus::read_file(path);
  try {
    return config_from_json(nlohmann::json::parse(text), path.parent_path());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
}

// ---- parallelism -----------------------------------------------------------

inline std::size_t worker_count(std::size_t requested, std::size_t jobs) {
  std::size_t w = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(w, jobs));
}

// out[i] = fn(i) for i < n on up to `workers` threads; output order is the
// index order regardless of scheduling. The first exception is rethrown.
template <typename Fn>
auto parallel_map(std::size_t n, std::size_t workers, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<std::optional<R>> slots(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::size_t w = worker_count(workers, n);
  if (w <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < w; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---- artifact I/O ----------------------------------------------------------

inline void write_text(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const std::filesystem::path& path) {
  auto text = corpus::read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// JSONL with {"sentence": "...", "labels": ["T1566", ...]} per line.
inline std::vector<LabeledSentence> load_extra_mappings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<LabeledSentence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      LabeledSentence s{j.at("sentence").get<std::string>(), {}};
      for (const auto& l : j.at("labels")) s.labels.insert(l.get<std::string>());
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) + ": " + e.what(), 0, line_no);
    }
  }
  return out;
}

inline nlohmann::json to_json(const ReportPrediction& p) {
  nlohmann::json sentences = nlohmann::json::array();
  for (std::size_t i = 0; i < p.sentence_scores.size(); ++i) {
    nlohmann::json hits = nlohmann::json::object();
    for (const auto& [id, s] : p.sentence_scores[i].scores)
      if (s >= p.threshold) hits[id] = s;
    if (!hits.empty()) sentences.push_back({{"index", i}, {"techniques", hits}});
  }
  return {{"report_id", p.report_id}, {"threshold", p.threshold}, {"techniques", p.techniques}, {"sentences", sentences}};
}

inline std::string to_jsonl(const std::vector<nlohmann::json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

struct LayoutSidecar {
  FeatureLayout layout;
  std::string config_hash;
};

inline std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension(".layout.json");
  return p;
}

inline void write_features(const std::filesystem::path& csv, const FeatureLayout& layout,
                           std::span<const PairFeatureVector> rows, const std::string& hash) {
  std::ostringstream ss;
  features::write_csv(ss, layout, rows);
  write_text(csv, ss.str());
  auto desc = layout.descriptor();
  desc["config_hash"] = hash;
  desc["rows"] = rows.size();
  write_json(sidecar_path(csv), desc);
}

// Reads a feature CSV and checks it against its sidecar, when present.
inline features::FeatureTable read_features(const std::filesystem::path& csv) {
  std::ifstream in(csv, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + csv.string());
  auto table = features::read_csv(in);
  auto side = sidecar_path(csv);
  if (std::filesystem::exists(side)) {
    auto layout = FeatureLayout::from_descriptor(read_json(side));
    if (!(layout == table.layout))
      throw ValidationError("feature layout mismatch between " + csv.string() + " and " + side.string() +
                            "; regenerate the features with the `features` command");
  }
  return table;
}

// ---- stages ----------------------------------------------------------------

struct KnowledgeBase {
  TechniqueCatalog catalog;
  UsageMatrix usage;
};

inline KnowledgeBase build_kb(const std::filesystem::path& stix) {
  auto bytes = corpus::read_file(stix);
  auto catalog = kb::parse_stix(bytes);
  auto usage = kb::build_usage_matrix(bytes, catalog);
  return {std::move(catalog), std::move(usage)};
}

inline std::vector<ReportPrediction> classify_reports(const CtfidfModel& model, const std::vector<Report>& reports,
                                                      double threshold, std::size_t workers) {
  return parallel_map(reports.size(), workers, [&](std::size_t i) { return predict_report(model, reports[i], threshold); });
}

// Ordered pairs of distinct detected techniques, plus annotated pairs of the
// report (so every annotation has a feature row).
inline std::vector<TechniquePair> report_pairs(const ReportPrediction& pred, const corpus::AnnotationIndex* annotations) {
  std::set<TechniquePair> pairs;
  for (auto& p : corpus::pair_universe(pred.techniques).pairs) pairs.insert(std::move(p));
  if (annotations)
    for (auto it = annotations->lower_bound({pred.report_id, "", ""});
         it != annotations->end() && std::get<0>(it->first) == pred.report_id; ++it)
      pairs.emplace(std::get<1>(it->first), std::get<2>(it->first));
  return {pairs.begin(), pairs.end()};
}

inline std::vector<PairFeatureVector> extract_features(const std::vector<Report>& reports,
                                                       const std::vector<ReportPrediction>& predictions,
                                                       const UsageMatrix* usage, const WordVectors* vectors,
                                                       const corpus::AnnotationIndex* annotations, std::size_t bins,
                                                       std::size_t workers) {
  auto per_report = parallel_map(reports.size(), workers, [&](std::size_t i) {
    features::PairFeatureBuilder builder(reports[i], predictions[i], usage, vectors, MarkerLexicon::standard(), bins);
    std::vector<PairFeatureVector> rows;
    for (const auto& pair : report_pairs(predictions[i], annotations)) rows.push_back(builder.build(pair));
    return rows;
  });
  std::vector<PairFeatureVector> out;
  for (auto& rows : per_report)
    for (auto& r : rows) out.push_back(std::move(r));
  return out;
}

inline std::vector<RelationSet> labels_for(std::span<const PairFeatureVector> rows, const corpus::AnnotationIndex& idx) {
  std::vector<RelationSet> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(corpus::lookup_labels(idx, r.report_id, r.pair));
  return out;
}

struct PipelineResult {
  std::vector<TemporalPattern> patterns;
  std::size_t reports = 0;
  std::size_t feature_rows = 0;
};

// kb -> techniques -> classify -> features -> relations -> predict -> mine.
// Every stage writes its artifact under config.out_dir.
inline PipelineResult run_pipeline(const PipelineConfig& config, std::ostream& log = std::cerr) {
  config.validate();
  const auto hash = config_hash(config);
  const auto& dir = config.out_dir;
  std::filesystem::create_directories(dir);
  auto stage = [&](const char* name, auto&& fn) {
    log << "[" << name << "]\n";
    try {
      return fn();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
  };

  auto kbase = stage("kb", [&] {
    auto k = build_kb(config.stix);
    write_json(dir / "catalog.json", kb::to_json(k.catalog));
    write_json(dir / "usage.json", kb::to_json(k.usage));
    return k;
  });

  auto technique_model = stage("train-techniques", [&] {
    std::vector<LabeledSentence> extra;
    if (config.extra_mappings) extra = load_extra_mappings(*config.extra_mappings);
    auto dataset = kb::build_action_dataset(kbase.catalog, config.min_examples, extra);
    auto model = ctfidf::train_ctfidf(dataset);
    auto j = ctfidf::to_json(model);
    j["config_hash"] = hash;
    write_json(dir / "techniques.model.json", j);
    return model;
  });

  auto reports = stage("corpus", [&] { return corpus::load_reports(config.reports); });

  std::optional<corpus::AnnotationIndex> annotations;
  if (config.annotations)
    annotations = stage("annotations", [&] { return corpus::index_annotations(corpus::load_annotations(*config.annotations, kbase.catalog)); });

  auto predictions = stage("classify", [&] {
    auto preds = classify_reports(technique_model, reports, config.technique_threshold, config.workers);
    std::vector<nlohmann::json> rows;
    for (const auto& p : preds) rows.push_back(pipeline::to_json(p));
    write_text(dir / "classify.jsonl", to_jsonl(rows));
    return preds;
  });

  std::optional<WordVectors> vectors;
  if (config.vectors) vectors = stage("vectors", [&] { return embeddings::load_word_vectors(*config.vectors); });

  FeatureLayout layout(config.apriori_bins);
  auto rows = stage("features", [&] {
    auto r = extract_features(reports, predictions, &kbase.usage, vectors ? &*vectors : nullptr,
                              annotations ? &*annotations : nullptr, config.apriori_bins, config.workers);
    write_features(dir / "features.csv", layout, r, hash);
    return r;
  });

  auto model = stage("train-relations", [&] {
    if (!annotations) throw std::runtime_error("annotations are required to train the relation classifier");
    auto m = relations::train(rows, labels_for(rows, *annotations), config.train);
    auto j = relations::to_json(m);
    j["config_hash"] = hash;
    write_json(dir / "relations.model.json", j);
    return m;
  });

  auto relation_predictions = stage("predict", [&] {
    auto preds = relations::predict_all(model, rows);
    std::vector<nlohmann::json> out;
    for (const auto& p : preds) out.push_back(relations::to_json(p));
    write_text(dir / "predictions.jsonl", to_jsonl(out));
    return preds;
  });

  auto mined = stage("mine", [&] {
    auto ps = patterns::mine(relation_predictions, config.min_support);
    if (config.categories) ps = patterns::categorize(std::move(ps), patterns::load_category_map(*config.categories));
    auto fmt = patterns::parse_export_format(config.export_format);
    const char* ext = fmt == patterns::ExportFormat::Csv ? "csv" : fmt == patterns::ExportFormat::Json ? "json" : "dot";
    write_text(dir / (std::string("patterns.") + ext), patterns::export_patterns(ps, fmt));
    if (fmt != patterns::ExportFormat::Csv) write_text(dir / "patterns.csv", patterns::to_csv(ps));
    return ps;
  });

  log << "done: " << reports.size() << " reports, " << rows.size() << " pairs, " << mined.size() << " patterns\n";
  return {std::move(mined), reports.size(), rows.size()};
}

}  // namespace pipeline
}  // namespace ttpchain
