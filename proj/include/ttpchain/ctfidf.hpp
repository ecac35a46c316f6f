#pragma once

// Class-based TF-IDF as a weak multi-label sentence -> technique classifier,
// and report-level technique detection over any sentence scorer.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ttpchain/attack_kb.hpp"
#include "ttpchain/corpus.hpp"
#include "ttpchain/error.hpp"
#include "ttpchain/text.hpp"

namespace ttpchain {

inline constexpr double kDefaultTechniqueThreshold = 0.95;

// Pseudo-probabilities in [0,1]. Techniques absent from the map score 0.
struct SentencePrediction {
  std::map<TechniqueId, double> scores;

  double score(const TechniqueId& id) const {
    auto it = scores.find(id);
    return it == scores.end() ? 0.0 : it->second;
  }
};

// Anything that maps a sentence to per-technique scores in [0,1] can drive
// report-level detection and the default pair features.
template <typename P>
concept ProbabilityProvider = requires(const P& p, const Sentence& s) {
  { p.class_ids() } -> std::convertible_to<const std::vector<TechniqueId>&>;
  { p.predict(s) } -> std::same_as<SentencePrediction>;
};

class CtfidfModel {
 public:
  struct Entry {
    std::size_t term;
    double weight;
  };

  CtfidfModel() = default;

  // `weights` is row-major, classes x vocab.
  CtfidfModel(std::vector<std::string> vocab, std::vector<TechniqueId> class_ids, std::span<const double> weights,
              double avg_tokens_per_class)
      : vocab_(std::move(vocab)), class_ids_(std::move(class_ids)), avg_tokens_(avg_tokens_per_class) {
    if (weights.size() != vocab_.size() * class_ids_.size())
      throw ContractViolation("CtfidfModel: weight matrix has wrong size");
    for (std::size_t t = 0; t < vocab_.size(); ++t) column_.emplace(vocab_[t], t);
    rows_.resize(class_ids_.size());
    norms_.assign(class_ids_.size(), 0.0);
    for (std::size_t c = 0; c < class_ids_.size(); ++c) {
      bool positive = false;
      for (std::size_t t = 0; t < vocab_.size(); ++t) {
        double w = weights[c * vocab_.size() + t];
        if (w < 0.0 || !std::isfinite(w)) throw ContractViolation("CtfidfModel: weights must be finite and >= 0");
        if (w > 0.0) {
          rows_[c].push_back({t, w});
          norms_[c] += w * w;
          positive = true;
        }
      }
      if (!positive) throw ContractViolation("CtfidfModel: class " + class_ids_[c] + " has an all-zero vector");
      norms_[c] = std::sqrt(norms_[c]);
    }
  }

  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::vector<TechniqueId>& class_ids() const { return class_ids_; }
  double avg_tokens_per_class() const { return avg_tokens_; }

  double weight(std::size_t cls, std::string_view term) const {
    auto it = column_.find(std::string(term));
    if (it == column_.end()) return 0.0;
    for (const auto& e : rows_[cls])
      if (e.term == it->second) return e.weight;
    return 0.0;
  }

  std::vector<double> dense_weights() const {
    std::vector<double> w(class_ids_.size() * vocab_.size(), 0.0);
    for (std::size_t c = 0; c < rows_.size(); ++c)
      for (const auto& e : rows_[c]) w[c * vocab_.size() + e.term] = e.weight;
    return w;
  }

  // Cosine between the sentence term-count vector and each class vector,
  // scaled so the best class scores exactly 1 (all zeros if nothing matches).
  SentencePrediction predict_tokens(std::span<const std::string> tokens) const {
    std::unordered_map<std::size_t, double> counts;
    for (const auto& tok : tokens) {
      auto it = column_.find(tok);
      if (it != column_.end()) counts[it->second] += 1.0;
    }
    SentencePrediction out;
    if (counts.empty()) return out;
    double sentence_norm = 0.0;
    for (const auto& [t, n] : counts) sentence_norm += n * n;
    sentence_norm = std::sqrt(sentence_norm);

    std::vector<double> raw(class_ids_.size(), 0.0);
    double best = 0.0;
    for (std::size_t c = 0; c < class_ids_.size(); ++c) {
      double dot = 0.0;
      for (const auto& e : rows_[c]) {
        auto it = counts.find(e.term);
        if (it != counts.end()) dot += it->second * e.weight;
      }
      raw[c] = dot / (sentence_norm * norms_[c]);
      best = std::max(best, raw[c]);
    }
    if (best <= 0.0) return out;
    for (std::size_t c = 0; c < class_ids_.size(); ++c)
      if (raw[c] > 0.0) out.scores.emplace(class_ids_[c], raw[c] == best ? 1.0 : raw[c] / best);
    return out;
  }

  SentencePrediction predict(const Sentence& s) const { return predict_tokens(s.tokens); }

  friend bool operator==(const CtfidfModel& a, const CtfidfModel& b) {
    return a.vocab_ == b.vocab_ && a.class_ids_ == b.class_ids_ && a.avg_tokens_ == b.avg_tokens_ &&
           a.dense_weights() == b.dense_weights();
  }

 private:
  std::vector<std::string> vocab_;
  std::vector<TechniqueId> class_ids_;
  double avg_tokens_ = 0.0;
  std::unordered_map<std::string, std::size_t> column_;
  std::vector<std::vector<Entry>> rows_;
  std::vector<double> norms_;
};

static_assert(ProbabilityProvider<CtfidfModel>);

namespace ctfidf {

inline constexpr std::string_view kModelSchema = "ttpchain.ctfidf/1";

// tf(t,c) = count of t in class c / tokens in c; idf(t) = ln(1 + A / f(t))
// with A the mean token count per class and f(t) the count of t over all
// classes. Multi-labeled examples count towards every label.
inline CtfidfModel train_ctfidf(const ActionDataset& dataset) {
  if (dataset.examples.empty()) throw TrainingError("c-TF-IDF: empty dataset");

  std::map<TechniqueId, std::map<std::string, double>> class_counts;
  std::map<std::string, double> term_freq;
  for (const auto& ex : dataset.examples) {
    if (ex.labels.empty()) throw TrainingError("c-TF-IDF: example without labels");
    auto tokens = text::tokenize(ex.sentence);
    for (const auto& label : ex.labels) {
      auto& counts = class_counts[label];
      for (const auto& t : tokens) {
        counts[t] += 1.0;
        term_freq[t] += 1.0;
      }
    }
  }

  std::vector<TechniqueId> classes;
  std::vector<double> class_totals;
  for (const auto& [cls, counts] : class_counts) {
    double total = 0.0;
    for (const auto& [t, n] : counts) total += n;
    if (total == 0.0) throw TrainingError("c-TF-IDF: class " + cls + " has no content tokens");
    classes.push_back(cls);
    class_totals.push_back(total);
  }
  double avg = 0.0;
  for (double t : class_totals) avg += t;
  avg /= static_cast<double>(class_totals.size());

  std::vector<std::string> vocab;
  std::map<std::string, std::size_t> column;
  for (const auto& [t, f] : term_freq) {
    column.emplace(t, vocab.size());
    vocab.push_back(t);
  }

  std::vector<double> weights(classes.size() * vocab.size(), 0.0);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    for (const auto& [t, n] : class_counts[classes[c]]) {
      double tf = n / class_totals[c];
      double idf = std::log(1.0 + avg / term_freq[t]);
      weights[c * vocab.size() + column[t]] = tf * idf;
    }
  }
  return CtfidfModel(std::move(vocab), std::move(classes), weights, avg);
}

inline nlohmann::json to_json(const CtfidfModel& m) {
  return {{"schema", kModelSchema},
          {"vocab", m.vocab()},
          {"class_ids", m.class_ids()},
          {"avg_tokens_per_class", m.avg_tokens_per_class()},
          {"weights", m.dense_weights()}};
}

inline CtfidfModel model_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kModelSchema)
    throw ParseError("c-TF-IDF model: unsupported schema '" + j.value("schema", "") + "'");
  auto weights = j.at("weights").get<std::vector<double>>();
  return CtfidfModel(j.at("vocab").get<std::vector<std::string>>(),
                     j.at("class_ids").get<std::vector<TechniqueId>>(), weights,
                     j.at("avg_tokens_per_class").get<double>());
}

}  // namespace ctfidf

// Report-level view of sentence scores.
struct ReportPrediction {
  std::string report_id;
  double threshold = kDefaultTechniqueThreshold;
  // Techniques scoring >= threshold in at least one sentence.
  std::set<TechniqueId> techniques;
  // Five best sentence scores per technique, descending, zero padded.
  std::map<TechniqueId, std::array<double, 5>> top5;
  std::vector<SentencePrediction> sentence_scores;

  std::array<double, 5> top5_for(const TechniqueId& id) const {
    auto it = top5.find(id);
    return it == top5.end() ? std::array<double, 5>{} : it->second;
  }

  // Indices of sentences where `id` scores at or above the threshold.
  std::vector<std::size_t> sentences_for(const TechniqueId& id) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < sentence_scores.size(); ++i)
      if (sentence_scores[i].score(id) >= threshold) out.push_back(i);
    return out;
  }
};

template <ProbabilityProvider Provider>
ReportPrediction predict_report(const Provider& provider, const Report& report,
                                double threshold = kDefaultTechniqueThreshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ContractViolation("predict_report: threshold must be in (0, 1]");
  ReportPrediction out;
  out.report_id = report.id;
  out.threshold = threshold;
  out.sentence_scores.reserve(report.sentences.size());
  std::map<TechniqueId, std::vector<double>> per_technique;
  for (const auto& s : report.sentences) {
    auto pred = provider.predict(s);
    for (const auto& [id, score] : pred.scores) {
      per_technique[id].push_back(score);
      if (score >= threshold) out.techniques.insert(id);
    }
    out.sentence_scores.push_back(std::move(pred));
  }
  for (auto& [id, scores] : per_technique) {
    std::sort(scores.begin(), scores.end(), std::greater<>());
    std::array<double, 5> top{};
    for (std::size_t k = 0; k < top.size() && k < scores.size(); ++k) top[k] = scores[k];
    out.top5.emplace(id, top);
  }
  return out;
}

}  // namespace ttpchain
