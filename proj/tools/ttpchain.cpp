#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ttpchain/ttpchain.hpp"

#ifndef TTPCHAIN_DATA_DIR
#define TTPCHAIN_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace ttpchain;

namespace {

struct Args {
  std::string stix, out, kb_dir, model, reports, annotations, features, vectors, predictions, categories, config, extra;
  std::string format;
  std::string groups;
  std::optional<double> threshold, learning_rate, downsample;
  std::optional<std::size_t> min_examples, bins, min_support, workers, trees, max_depth, folds;
  std::optional<std::uint64_t> seed;
};

// Settings come from --config when given; flags win.
PipelineConfig resolve_config(const Args& a) {
  PipelineConfig c = a.config.empty() ? PipelineConfig{} : pipeline::load_config(a.config);
  if (a.threshold) c.technique_threshold = *a.threshold;
  if (a.min_examples) c.min_examples = *a.min_examples;
  if (a.bins) c.apriori_bins = *a.bins;
  if (a.min_support) c.min_support = *a.min_support;
  if (a.workers) c.workers = *a.workers;
  if (a.trees) c.train.trees = *a.trees;
  if (a.max_depth) c.train.max_depth = *a.max_depth;
  if (a.learning_rate) c.train.learning_rate = *a.learning_rate;
  if (a.downsample) c.train.negative_downsample_ratio = *a.downsample;
  if (a.seed) c.train.seed = *a.seed;
  if (!a.groups.empty()) c.train.groups = parse_feature_groups(a.groups);
  if (!a.format.empty()) c.export_format = a.format;
  if (!a.stix.empty()) c.stix = a.stix;
  if (!a.reports.empty()) c.reports = a.reports;
  if (!a.annotations.empty()) c.annotations = fs::path(a.annotations);
  if (!a.vectors.empty()) c.vectors = fs::path(a.vectors);
  if (!a.categories.empty()) c.categories = fs::path(a.categories);
  if (!a.extra.empty()) c.extra_mappings = fs::path(a.extra);
  if (!a.out.empty()) c.out_dir = a.out;
  c.validate();
  return c;
}

TechniqueCatalog load_catalog(const fs::path& kb_dir) {
  return kb::catalog_from_json(pipeline::read_json(kb_dir / "catalog.json"));
}

UsageMatrix load_usage(const fs::path& kb_dir) { return kb::usage_from_json(pipeline::read_json(kb_dir / "usage.json")); }

std::vector<RelationSet> load_labels(const fs::path& annotations, std::span<const PairFeatureVector> rows) {
  auto idx = corpus::index_annotations(corpus::load_annotations(annotations));
  return pipeline::labels_for(rows, idx);
}

std::string stage_of(const CLI::App& app) {
  for (const auto* sub : app.get_subcommands()) {
    auto inner = sub->get_subcommands();
    return inner.empty() ? sub->get_name() : sub->get_name() + " " + inner.front()->get_name();
  }
  return "ttpchain";
}

void print_version() {
  std::string categories_version = "missing";
  fs::path data = fs::path(TTPCHAIN_DATA_DIR) / "categories.txt";
  if (fs::exists(data)) categories_version = patterns::load_category_map(data).version();
  std::cout << "ttpchain " << kToolVersion << "\n"
            << "feature layout " << FeatureLayout().version() << "\n"
            << "stopwords " << text::kStopwordListVersion << "\n"
            << "categories " << categories_version << " (" << data.generic_string() << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal attack-pattern mining over CTI reports"};
  app.require_subcommand(0, 1);
  bool version = false;
  app.add_flag("--version", version, "Print tool, layout and data versions");
  Args a;

  auto* kb_cmd = app.add_subcommand("kb", "ATT&CK knowledge base");
  kb_cmd->require_subcommand(1);
  auto* kb_build = kb_cmd->add_subcommand("build", "Parse a STIX bundle into catalog.json and usage.json");
  kb_build->add_option("--stix", a.stix, "STIX 2.x bundle")->required()->check(CLI::ExistingFile);
  kb_build->add_option("--out", a.out, "Output directory")->required();

  auto* train_tech = app.add_subcommand("train-techniques", "Train the c-TF-IDF sentence classifier");
  train_tech->add_option("--kb", a.kb_dir, "Directory written by `kb build`")->required()->check(CLI::ExistingDirectory);
  train_tech->add_option("--min-examples", a.min_examples, "Minimum examples per technique (default 20)");
  train_tech->add_option("--extra", a.extra, "JSONL of extra {sentence, labels} mappings")->check(CLI::ExistingFile);
  train_tech->add_option("--config", a.config, "Pipeline config JSON")->check(CLI::ExistingFile);
  train_tech->add_option("--out", a.out, "Model JSON")->required();

  auto* corpus_cmd = app.add_subcommand("corpus", "Report corpus utilities");
  corpus_cmd->require_subcommand(1);
  auto* validate = corpus_cmd->add_subcommand("validate", "Check reports and annotations");
  validate->add_option("--reports", a.reports, "Directory of *.txt reports")->required()->check(CLI::ExistingDirectory);
  validate->add_option("--annotations", a.annotations, "Annotation JSONL")->check(CLI::ExistingFile);
  validate->add_option("--kb", a.kb_dir, "Check technique ids against this catalog")->check(CLI::ExistingDirectory);

  auto* classify = app.add_subcommand("classify", "Detect techniques per report");
  classify->add_option("--model", a.model, "c-TF-IDF model JSON")->required()->check(CLI::ExistingFile);
  classify->add_option("--reports", a.reports, "Directory of *.txt reports")->required()->check(CLI::ExistingDirectory);
  classify->add_option("--threshold", a.threshold, "Sentence score threshold (default 0.95)");
  classify->add_option("--workers", a.workers, "Worker threads (default: all cores)");
  classify->add_option("--config", a.config, "Pipeline config JSON")->check(CLI::ExistingFile);
  classify->add_option("--out", a.out, "Output JSONL")->required();

  auto* feats = app.add_subcommand("features", "Build pair feature vectors");
  feats->add_option("--reports", a.reports, "Directory of *.txt reports")->required()->check(CLI::ExistingDirectory);
  feats->add_option("--kb", a.kb_dir, "Directory written by `kb build`")->required()->check(CLI::ExistingDirectory);
  feats->add_option("--model", a.model, "c-TF-IDF model JSON")->required()->check(CLI::ExistingFile);
  feats->add_option("--vectors", a.vectors, "word2vec text-format vectors")->check(CLI::ExistingFile);
  feats->add_option("--annotations", a.annotations, "Also emit rows for annotated pairs")->check(CLI::ExistingFile);
  feats->add_option("--threshold", a.threshold, "Sentence score threshold (default 0.95)");
  feats->add_option("--bins", a.bins, "Apriori bins (default 10)");
  feats->add_option("--workers", a.workers, "Worker threads (default: all cores)");
  feats->add_option("--config", a.config, "Pipeline config JSON")->check(CLI::ExistingFile);
  feats->add_option("--out", a.out, "Output CSV (a .layout.json sidecar is written next to it)")->required();

  auto* train_rel = app.add_subcommand("train-relations", "Train the relation classifier");
  train_rel->add_option("--features", a.features, "Feature CSV")->required()->check(CLI::ExistingFile);
  train_rel->add_option("--annotations", a.annotations, "Annotation JSONL")->required()->check(CLI::ExistingFile);
  train_rel->add_option("--config", a.config, "Pipeline config JSON")->check(CLI::ExistingFile);
  train_rel->add_option("--trees", a.trees, "Boosting rounds (default 200)");
  train_rel->add_option("--max-depth", a.max_depth, "Tree depth (default 3)");
  train_rel->add_option("--learning-rate", a.learning_rate, "Shrinkage (default 0.1)");
  train_rel->add_option("--downsample", a.downsample, "NULL rows per positive row (default 10)");
  train_rel->add_option("--seed", a.seed, "Sampling seed");
  train_rel->add_option("--groups", a.groups, "Feature groups, e.g. f1+f2 (default f1+f2+f3+f4)");
  train_rel->add_option("--out", a.out, "Model JSON")->required();

  auto* predict_cmd = app.add_subcommand("predict", "Predict relations for feature rows");
  predict_cmd->add_option("--model", a.model, "Relation model JSON")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--features", a.features, "Feature CSV")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", a.out, "Output JSONL")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a relation model, or cross-validate with --folds");
  eval_cmd->add_option("--model", a.model, "Relation model JSON")->check(CLI::ExistingFile);
  eval_cmd->add_option("--features", a.features, "Feature CSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--annotations", a.annotations, "Annotation JSONL")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--folds", a.folds, "Report-level cross-validation folds (ignores --model)");
  eval_cmd->add_option("--config", a.config, "Pipeline config JSON (training settings for --folds)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--seed", a.seed, "Seed for --folds");
  eval_cmd->add_option("--out", a.out, "Write metrics JSON here instead of stdout");

  auto* mine_cmd = app.add_subcommand("mine", "Aggregate predictions into temporal patterns");
  mine_cmd->add_option("--predictions", a.predictions, "Relation predictions JSONL")->required()->check(CLI::ExistingFile);
  mine_cmd->add_option("--min-support", a.min_support, "Minimum number of reports (default 2)");
  mine_cmd->add_option("--categories", a.categories, "Category map file")->check(CLI::ExistingFile);
  mine_cmd->add_option("--format", a.format, "csv, json or dot (default dot)");
  mine_cmd->add_option("--out", a.out, "Output file")->required();

  auto* run = app.add_subcommand("run", "Run every stage from a config file");
  run->add_option("--config", a.config, "Pipeline config JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", a.out, "Override the output directory");
  run->add_option("--min-support", a.min_support, "Override mining threshold");
  run->add_option("--workers", a.workers, "Worker threads");
  run->add_option("--seed", a.seed, "Override training seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (version) {
      print_version();
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cout << app.help();
      return 0;
    }

    if (kb_build->parsed()) {
      auto k = pipeline::build_kb(a.stix);
      pipeline::write_json(fs::path(a.out) / "catalog.json", kb::to_json(k.catalog));
      pipeline::write_json(fs::path(a.out) / "usage.json", kb::to_json(k.usage));
      std::cerr << k.catalog.size() << " techniques, " << k.usage.rows() << " actors, " << k.usage.skipped_relationships()
                << " skipped relationships\n";
    } else if (train_tech->parsed()) {
      auto c = resolve_config(a);
      std::vector<LabeledSentence> extra;
      if (c.extra_mappings) extra = pipeline::load_extra_mappings(*c.extra_mappings);
      auto dataset = kb::build_action_dataset(load_catalog(a.kb_dir), c.min_examples, extra);
      auto model = ctfidf::train_ctfidf(dataset);
      auto j = ctfidf::to_json(model);
      j["config_hash"] = pipeline::config_hash(c);
      pipeline::write_json(a.out, j);
      std::cerr << model.class_ids().size() << " techniques, " << dataset.examples.size() << " examples\n";
    } else if (validate->parsed()) {
      auto reports = corpus::load_reports(a.reports);
      std::size_t sentences = 0;
      for (const auto& r : reports) sentences += r.size();
      nlohmann::json summary = {{"reports", reports.size()}, {"sentences", sentences}};
      if (!a.annotations.empty()) {
        auto anns = a.kb_dir.empty() ? corpus::load_annotations(a.annotations)
                                     : corpus::load_annotations(a.annotations, load_catalog(a.kb_dir));
        std::set<std::string> ids;
        for (const auto& r : reports) ids.insert(r.id);
        std::size_t orphans = 0, mirrors = 0;
        for (const auto& ann : anns) {
          orphans += ids.contains(ann.report_id) ? 0 : 1;
          mirrors += ann.inferred_mirror ? 1 : 0;
        }
        summary["annotations"] = anns.size();
        summary["inferred_mirrors"] = mirrors;
        summary["annotations_without_report"] = orphans;
        if (orphans) {
          std::cout << summary.dump(2) << "\n";
          std::cerr << "error: " << orphans << " annotation(s) reference unknown reports\n";
          return 1;
        }
      }
      std::cout << summary.dump(2) << "\n";
    } else if (classify->parsed()) {
      auto c = resolve_config(a);
      auto model = ctfidf::model_from_json(pipeline::read_json(a.model));
      auto reports = corpus::load_reports(a.reports);
      auto preds = pipeline::classify_reports(model, reports, c.technique_threshold, c.workers);
      std::vector<nlohmann::json> rows;
      for (const auto& p : preds) rows.push_back(pipeline::to_json(p));
      pipeline::write_text(a.out, pipeline::to_jsonl(rows));
    } else if (feats->parsed()) {
      auto c = resolve_config(a);
      auto model = ctfidf::model_from_json(pipeline::read_json(a.model));
      auto usage = load_usage(a.kb_dir);
      auto reports = corpus::load_reports(a.reports);
      auto preds = pipeline::classify_reports(model, reports, c.technique_threshold, c.workers);
      std::optional<WordVectors> vectors;
      if (c.vectors) vectors = embeddings::load_word_vectors(*c.vectors);
      std::optional<corpus::AnnotationIndex> idx;
      if (c.annotations) idx = corpus::index_annotations(corpus::load_annotations(*c.annotations));
      auto rows = pipeline::extract_features(reports, preds, &usage, vectors ? &*vectors : nullptr, idx ? &*idx : nullptr,
                                             c.apriori_bins, c.workers);
      pipeline::write_features(a.out, FeatureLayout(c.apriori_bins), rows, pipeline::config_hash(c));
      std::cerr << rows.size() << " feature rows\n";
    } else if (train_rel->parsed()) {
      auto c = resolve_config(a);
      auto table = pipeline::read_features(a.features);
      auto labels = load_labels(a.annotations, table.rows);
      auto model = relations::train(table.rows, labels, c.train);
      auto j = relations::to_json(model);
      j["config_hash"] = pipeline::config_hash(c);
      pipeline::write_json(a.out, j);
    } else if (predict_cmd->parsed()) {
      auto model = relations::ensemble_from_json(pipeline::read_json(a.model));
      auto table = pipeline::read_features(a.features);
      if (table.layout.version() != model.layout_version)
        throw ValidationError("feature layout " + table.layout.version() + " does not match model layout " +
                              model.layout_version + "; rebuild features with matching --bins or retrain");
      std::vector<nlohmann::json> rows;
      for (const auto& fv : table.rows) rows.push_back(relations::to_json(relations::predict(model, fv)));
      pipeline::write_text(a.out, pipeline::to_jsonl(rows));
    } else if (eval_cmd->parsed()) {
      auto table = pipeline::read_features(a.features);
      auto labels = load_labels(a.annotations, table.rows);
      nlohmann::json out;
      if (a.folds) {
        auto c = resolve_config(a);
        out = relations::to_json(relations::cross_validate(table.rows, labels, c.train, *a.folds));
      } else {
        if (a.model.empty()) throw ValidationError("eval needs --model or --folds");
        auto model = relations::ensemble_from_json(pipeline::read_json(a.model));
        std::vector<RelationSet> pred;
        std::vector<RelationScores> probs;
        for (const auto& fv : table.rows) {
          auto p = relations::predict(model, fv);
          pred.push_back(p.labels);
          probs.push_back(p.probabilities);
        }
        out = metrics::to_json(metrics::evaluate(labels, pred, probs));
      }
      if (a.out.empty())
        std::cout << out.dump(2) << "\n";
      else
        pipeline::write_json(a.out, out);
    } else if (mine_cmd->parsed()) {
      std::ifstream in(a.predictions);
      auto preds = relations::parse_predictions(in);
      auto ps = patterns::mine(preds, a.min_support.value_or(kDefaultMinSupport));
      if (!a.categories.empty()) ps = patterns::categorize(std::move(ps), patterns::load_category_map(a.categories));
      pipeline::write_text(a.out, patterns::export_patterns(ps, a.format.empty() ? "dot" : a.format));
      std::cerr << ps.size() << " patterns\n";
    } else if (run->parsed()) {
      auto c = resolve_config(a);
      pipeline::run_pipeline(c);
    }
  } catch (const StageError& e) {
    std::cerr << "error: [" << e.stage() << "] " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: [" << stage_of(app) << "] " << e.what() << "\n";
    return 1;
  }
  return 0;
}
