#pragma once

// Fixed-layout numeric feature vector for one ordered technique pair in one
// report:
//
//   default (10)  top-5 sentence scores of tx, then of ty
//   F1      (20)  temporal-marker counts
//   F2      (13)  sentence adjacency, co-location, similarity, coreference
//   F3      (10)  discourse relations over adjacent and coreferenced pairs
//   F4  (9+9*B)   association-rule measures over the usage matrix, raw and
//                 one-hot over B equal-width bins
//
// F1 slot enumeration:
//    0-2   marker counts (before, overlap, concurrent) in tx sentences
//    3-5   same, in ty sentences
//    6-8   same, in sentences holding both techniques
//    9-11  same, over the inclusive span between the nearest (tx, ty) pair
//   12-17  directional counts: for each i in tx, j in ty with i < j the
//          markers in sentences i+1..j count as "tx first"; symmetric for
//          "ty first". Order: before/tx, before/ty, overlap/tx, overlap/ty,
//          concurrent/tx, concurrent/ty
//   18-19  markers per sentence over tx sentences, over ty sentences
//
// F2 adjacency uses d = j - i - 1 when the ty sentence j follows the tx
// sentence i (d = 0 for neighbours) and d = j - i when it precedes it
// (d = -1 for neighbours), for d in -4..4.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ttpchain/apriori.hpp"
#include "ttpchain/attack_kb.hpp"
#include "ttpchain/corpus.hpp"
#include "ttpchain/ctfidf.hpp"
#include "ttpchain/discourse.hpp"
#include "ttpchain/embeddings.hpp"
#include "ttpchain/error.hpp"
#include "ttpchain/markers.hpp"

namespace ttpchain {

enum class FeatureGroup : std::uint8_t { Default = 0, F1, F2, F3, F4 };

inline constexpr std::size_t kDefaultSlots = 10;
inline constexpr std::size_t kMarkerSlots = 20;
inline constexpr std::size_t kSentenceSlots = 13;
inline constexpr std::size_t kDiscourseSlots = 10;
inline constexpr std::size_t kDefaultAprioriBins = 10;

class FeatureLayout {
 public:
  static constexpr std::string_view kSchema = "ttpchain.features/1";

  explicit FeatureLayout(std::size_t bins = kDefaultAprioriBins) : bins_(bins) {
    if (bins_ < 1) throw ContractViolation("FeatureLayout: bins must be >= 1");
  }

  std::size_t bins() const { return bins_; }

  std::size_t group_size(FeatureGroup g) const {
    switch (g) {
      case FeatureGroup::Default: return kDefaultSlots;
      case FeatureGroup::F1: return kMarkerSlots;
      case FeatureGroup::F2: return kSentenceSlots;
      case FeatureGroup::F3: return kDiscourseSlots;
      case FeatureGroup::F4: return kAprioriMetricCount * (1 + bins_);
    }
    return 0;
  }

  std::size_t group_offset(FeatureGroup g) const {
    std::size_t off = 0;
    for (auto h : {FeatureGroup::Default, FeatureGroup::F1, FeatureGroup::F2, FeatureGroup::F3}) {
      if (h == g) return off;
      off += group_size(h);
    }
    return off;
  }

  std::size_t total() const { return group_offset(FeatureGroup::F4) + group_size(FeatureGroup::F4); }

  std::string version() const { return std::string(kSchema) + ";bins=" + std::to_string(bins_); }

  std::vector<std::string> slot_names() const {
    std::vector<std::string> n;
    n.reserve(total());
    for (auto who : {"tx", "ty"})
      for (int k = 1; k <= 5; ++k) n.push_back(std::string("def.") + who + "_top" + std::to_string(k));
    const std::array<std::string, 3> rel = {"before", "overlap", "concurrent"};
    for (auto where : {"tx", "ty", "shared", "span"})
      for (const auto& r : rel) n.push_back(std::string("f1.") + where + "_" + r);
    for (const auto& r : rel) {
      n.push_back("f1.dir_" + r + "_tx_first");
      n.push_back("f1.dir_" + r + "_ty_first");
    }
    n.emplace_back("f1.density_tx");
    n.emplace_back("f1.density_ty");
    for (int d = -4; d <= 4; ++d) n.push_back("f2.adj_" + std::to_string(d));
    for (auto s : {"f2.same_sentence", "f2.sim_mean", "f2.sim_max", "f2.coref"}) n.emplace_back(s);
    for (auto kind : {"adj", "coref"})
      for (auto r : kAllDiscourseRelations) n.push_back(std::string("f3.") + kind + "_" + std::string(to_string(r)));
    for (const auto& spec : apriori::kMetricSpecs) n.push_back("f4." + std::string(spec.name));
    for (const auto& spec : apriori::kMetricSpecs)
      for (std::size_t b = 0; b < bins_; ++b) n.push_back("f4." + std::string(spec.name) + "_bin" + std::to_string(b));
    return n;
  }

  nlohmann::json descriptor() const {
    nlohmann::json groups = nlohmann::json::array();
    const std::array<std::pair<FeatureGroup, const char*>, 5> gs = {{{FeatureGroup::Default, "default"},
                                                                      {FeatureGroup::F1, "f1"},
                                                                      {FeatureGroup::F2, "f2"},
                                                                      {FeatureGroup::F3, "f3"},
                                                                      {FeatureGroup::F4, "f4"}}};
    for (auto [g, name] : gs)
      groups.push_back({{"name", name}, {"offset", group_offset(g)}, {"size", group_size(g)}});
    return {{"schema", kSchema},
            {"layout_version", version()},
            {"apriori_bins", bins_},
            {"total", total()},
            {"groups", groups},
            {"slots", slot_names()}};
  }

  static FeatureLayout from_descriptor(const nlohmann::json& j) {
    if (j.value("schema", "") != kSchema) throw ParseError("feature layout: unsupported schema");
    FeatureLayout layout(j.at("apriori_bins").get<std::size_t>());
    if (j.value("layout_version", "") != layout.version())
      throw ValidationError("feature layout: version mismatch");
    return layout;
  }

  friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;

 private:
  std::size_t bins_;
};

struct PairFeatureVector {
  std::string report_id;
  TechniquePair pair;
  std::vector<double> values;
  std::string layout_version;
  // Set when F4 could not be computed (technique missing from the usage
  // matrix, or no matrix); the F4 slots are zero.
  bool kb_missing = false;
};

namespace features {

using IndexSet = std::span<const std::size_t>;  // sorted, unique

namespace detail {

inline bool contains(IndexSet s, std::size_t i) { return std::binary_search(s.begin(), s.end(), i); }

inline void add(std::span<double> dst, const MarkerCounts& c) {
  for (std::size_t k = 0; k < 3; ++k) dst[k] += c[k];
}

inline double total(const MarkerCounts& c) { return c[0] + c[1] + c[2]; }

}  // namespace detail

// Per-sentence marker counts shared by every pair of a report.
inline std::vector<MarkerCounts> sentence_marker_counts(const Report& report, const MarkerLexicon& lexicon) {
  std::vector<MarkerCounts> out;
  out.reserve(report.sentences.size());
  for (const auto& s : report.sentences) out.push_back(count_markers(lexicon, s.words));
  return out;
}

inline std::array<double, kMarkerSlots> marker_features(std::span<const MarkerCounts> per_sentence, IndexSet tx,
                                                         IndexSet ty) {
  std::array<double, kMarkerSlots> f{};
  std::span<double> out(f);
  for (auto i : tx) detail::add(out.subspan(0, 3), per_sentence[i]);
  for (auto j : ty) detail::add(out.subspan(3, 3), per_sentence[j]);
  for (auto i : tx)
    if (detail::contains(ty, i)) detail::add(out.subspan(6, 3), per_sentence[i]);

  if (!tx.empty() && !ty.empty()) {
    // Nearest pair by distance, then by (lower, upper) index.
    std::size_t best_lo = 0, best_hi = 0, best_gap = std::numeric_limits<std::size_t>::max();
    for (auto i : tx)
      for (auto j : ty) {
        std::size_t lo = std::min(i, j), hi = std::max(i, j), gap = hi - lo;
        if (gap < best_gap || (gap == best_gap && std::pair(lo, hi) < std::pair(best_lo, best_hi))) {
          best_gap = gap;
          best_lo = lo;
          best_hi = hi;
        }
      }
    for (std::size_t k = best_lo; k <= best_hi; ++k) detail::add(out.subspan(9, 3), per_sentence[k]);

    std::vector<MarkerCounts> prefix(per_sentence.size() + 1, MarkerCounts{});
    for (std::size_t k = 0; k < per_sentence.size(); ++k)
      for (std::size_t r = 0; r < 3; ++r) prefix[k + 1][r] = prefix[k][r] + per_sentence[k][r];
    // Markers in sentences (a, b], a < b.
    auto between = [&](std::size_t a, std::size_t b, std::size_t r) { return prefix[b + 1][r] - prefix[a + 1][r]; };
    for (auto i : tx)
      for (auto j : ty) {
        if (i == j) continue;
        for (std::size_t r = 0; r < 3; ++r) {
          if (i < j)
            f[12 + 2 * r] += between(i, j, r);
          else
            f[12 + 2 * r + 1] += between(j, i, r);
        }
      }
  }

  auto density = [&](IndexSet s) {
    if (s.empty()) return 0.0;
    double t = 0.0;
    for (auto i : s) t += detail::total(per_sentence[i]);
    return t / static_cast<double>(s.size());
  };
  f[18] = density(tx);
  f[19] = density(ty);
  return f;
}

inline std::array<double, kMarkerSlots> marker_features(const Report& report, IndexSet tx, IndexSet ty,
                                                         const MarkerLexicon& lexicon = MarkerLexicon::standard()) {
  auto counts = sentence_marker_counts(report, lexicon);
  return marker_features(counts, tx, ty);
}

// Adjacency slot (0..8 for d = -4..4) for tx sentence i and ty sentence j.
inline std::optional<std::size_t> adjacency_slot(std::size_t i, std::size_t j) {
  if (i == j) return std::nullopt;
  long d = j > i ? static_cast<long>(j - i) - 1 : -static_cast<long>(i - j);
  if (d < -4 || d > 4) return std::nullopt;
  return static_cast<std::size_t>(d + 4);
}

inline std::array<double, kSentenceSlots> sentence_features(IndexSet tx, IndexSet ty,
                                                            const std::set<SentenceLink>& links,
                                                            std::span<const std::vector<double>> sentence_vectors) {
  std::array<double, kSentenceSlots> f{};
  for (auto i : tx)
    for (auto j : ty)
      if (auto slot = adjacency_slot(i, j)) f[*slot] += 1.0;
  for (auto i : tx) f[9] += detail::contains(ty, i) ? 1.0 : 0.0;

  if (!sentence_vectors.empty() && !tx.empty() && !ty.empty()) {
    double sum = 0.0, best = -std::numeric_limits<double>::infinity();
    for (auto i : tx)
      for (auto j : ty) {
        double c = embeddings::cosine(sentence_vectors[i], sentence_vectors[j]);
        sum += c;
        best = std::max(best, c);
      }
    f[10] = sum / static_cast<double>(tx.size() * ty.size());
    f[11] = best;
  }

  for (const auto& [a, b] : links)
    if ((detail::contains(tx, a) && detail::contains(ty, b)) || (detail::contains(ty, a) && detail::contains(tx, b)))
      f[12] += 1.0;
  return f;
}

inline std::array<double, kSentenceSlots> sentence_features(const Report& report, IndexSet tx, IndexSet ty,
                                                            const WordVectors* wv = nullptr) {
  std::vector<std::vector<double>> vecs;
  if (wv)
    for (const auto& s : report.sentences) vecs.push_back(embeddings::sentence_vector(*wv, s.tokens));
  return sentence_features(tx, ty, discourse::coref_links(report), vecs);
}

// Discourse-relation counts over adjacent cross pairs (slots 0-4) and
// coreferenced cross pairs (slots 5-9).
inline std::array<double, kDiscourseSlots> discourse_features(const Report& report, IndexSet tx, IndexSet ty,
                                                              const std::set<SentenceLink>& links,
                                                              const MarkerLexicon& lexicon) {
  std::array<double, kDiscourseSlots> f{};
  auto cross = [&](std::size_t a, std::size_t b) {
    return (detail::contains(tx, a) && detail::contains(ty, b)) || (detail::contains(ty, a) && detail::contains(tx, b));
  };
  const auto& ss = report.sentences;
  for (std::size_t i = 0; i + 1 < ss.size(); ++i) {
    if (!cross(i, i + 1)) continue;
    auto r = discourse::classify_discourse(ss[i], ss[i + 1], links.contains({i, i + 1}), lexicon);
    f[static_cast<std::size_t>(r)] += 1.0;
  }
  for (const auto& [a, b] : links) {
    if (!cross(a, b)) continue;
    auto r = discourse::classify_discourse(ss[a], ss[b], true, lexicon);
    f[5 + static_cast<std::size_t>(r)] += 1.0;
  }
  return f;
}

// Caches per-report state (marker counts, coreference links, sentence
// vectors) so that building every pair of a report stays cheap.
class PairFeatureBuilder {
 public:
  PairFeatureBuilder(const Report& report, const ReportPrediction& prediction, const UsageMatrix* usage,
                     const WordVectors* vectors, const MarkerLexicon& lexicon = MarkerLexicon::standard(),
                     std::size_t bins = kDefaultAprioriBins)
      : report_(report),
        prediction_(prediction),
        usage_(usage),
        lexicon_(lexicon),
        layout_(bins),
        markers_(sentence_marker_counts(report, lexicon)),
        links_(discourse::coref_links(report, lexicon)) {
    if (prediction.sentence_scores.size() != report.sentences.size())
      throw ContractViolation("PairFeatureBuilder: prediction does not belong to report " + report.id);
    if (vectors)
      for (const auto& s : report.sentences) vectors_.push_back(embeddings::sentence_vector(*vectors, s.tokens));
  }

  const FeatureLayout& layout() const { return layout_; }
  const std::set<SentenceLink>& coref() const { return links_; }

  PairFeatureVector build(const TechniquePair& pair) const {
    PairFeatureVector fv;
    fv.report_id = report_.id;
    fv.pair = pair;
    fv.layout_version = layout_.version();
    fv.values.reserve(layout_.total());

    for (const auto* id : {&pair.first, &pair.second}) {
      auto top = prediction_.top5_for(*id);
      fv.values.insert(fv.values.end(), top.begin(), top.end());
    }
    auto tx = prediction_.sentences_for(pair.first);
    auto ty = prediction_.sentences_for(pair.second);
    auto f1 = marker_features(markers_, tx, ty);
    fv.values.insert(fv.values.end(), f1.begin(), f1.end());
    auto f2 = sentence_features(tx, ty, links_, vectors_);
    fv.values.insert(fv.values.end(), f2.begin(), f2.end());
    auto f3 = discourse_features(report_, tx, ty, links_, lexicon_);
    fv.values.insert(fv.values.end(), f3.begin(), f3.end());

    if (usage_ && usage_->rows() > 0 && usage_->column_index(pair.first) && usage_->column_index(pair.second)) {
      auto f4 = apriori::apriori_features(*usage_, pair, layout_.bins());
      fv.values.insert(fv.values.end(), f4.begin(), f4.end());
    } else {
      fv.kb_missing = true;
      fv.values.resize(layout_.total(), 0.0);
    }
    return fv;
  }

 private:
  const Report& report_;
  const ReportPrediction& prediction_;
  const UsageMatrix* usage_;
  const MarkerLexicon& lexicon_;
  FeatureLayout layout_;
  std::vector<MarkerCounts> markers_;
  std::set<SentenceLink> links_;
  std::vector<std::vector<double>> vectors_;
};

inline PairFeatureVector build_feature_vector(const Report& report, const TechniquePair& pair,
                                              const ReportPrediction& prediction, const UsageMatrix* usage,
                                              const WordVectors* vectors,
                                              const MarkerLexicon& lexicon = MarkerLexicon::standard(),
                                              std::size_t bins = kDefaultAprioriBins) {
  return PairFeatureBuilder(report, prediction, usage, vectors, lexicon, bins).build(pair);
}

// ---- CSV feature matrix ----------------------------------------------------

inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

inline double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size())
    throw ParseError("features CSV: bad number '" + std::string(s) + "' on line " + std::to_string(line), 0, line);
  return v;
}

inline constexpr std::array<std::string_view, 4> kCsvKeyColumns = {"report_id", "tx", "ty", "kb_missing"};

inline void write_csv(std::ostream& out, const FeatureLayout& layout, std::span<const PairFeatureVector> rows) {
  for (auto c : kCsvKeyColumns) out << c << ',';
  auto names = layout.slot_names();
  for (std::size_t k = 0; k < names.size(); ++k) out << names[k] << (k + 1 < names.size() ? "," : "\n");
  for (const auto& r : rows) {
    if (r.values.size() != layout.total() || r.layout_version != layout.version())
      throw ContractViolation("write_csv: row layout does not match " + layout.version());
    out << r.report_id << ',' << r.pair.first << ',' << r.pair.second << ',' << (r.kb_missing ? 1 : 0);
    for (double v : r.values) out << ',' << format_double(v);
    out << '\n';
  }
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto k = line.find(',', start);
    out.push_back(line.substr(start, k == std::string_view::npos ? std::string_view::npos : k - start));
    if (k == std::string_view::npos) break;
    start = k + 1;
  }
  return out;
}

struct FeatureTable {
  FeatureLayout layout;
  std::vector<PairFeatureVector> rows;
};

// The layout is recovered from the header (bin count) and checked slot by slot.
inline FeatureTable read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("features CSV: empty input", 0, 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_commas(line);
  if (header.size() < kCsvKeyColumns.size()) throw ParseError("features CSV: short header", 0, 1);
  for (std::size_t k = 0; k < kCsvKeyColumns.size(); ++k)
    if (header[k] != kCsvKeyColumns[k]) throw ParseError("features CSV: unexpected key column", 0, 1);
  std::size_t slots = header.size() - kCsvKeyColumns.size();
  std::size_t fixed = kDefaultSlots + kMarkerSlots + kSentenceSlots + kDiscourseSlots + kAprioriMetricCount;
  if (slots <= fixed || (slots - fixed) % kAprioriMetricCount != 0)
    throw ParseError("features CSV: header does not describe a known layout", 0, 1);
  FeatureLayout layout((slots - fixed) / kAprioriMetricCount);
  auto names = layout.slot_names();
  for (std::size_t k = 0; k < names.size(); ++k)
    if (header[kCsvKeyColumns.size() + k] != names[k])
      throw ParseError("features CSV: column " + std::to_string(k) + " is '" +
                           std::string(header[kCsvKeyColumns.size() + k]) + "', expected '" + names[k] + "'",
                       0, 1);

  FeatureTable table{layout, {}};
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_commas(line);
    if (cells.size() != header.size())
      throw ParseError("features CSV: line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                           " cells, expected " + std::to_string(header.size()),
                       0, line_no);
    PairFeatureVector fv;
    fv.report_id = std::string(cells[0]);
    fv.pair = {std::string(cells[1]), std::string(cells[2])};
    fv.kb_missing = cells[3] == "1";
    fv.layout_version = layout.version();
    fv.values.reserve(slots);
    for (std::size_t k = kCsvKeyColumns.size(); k < cells.size(); ++k) {
      double v = parse_double(cells[k], line_no);
      if (!std::isfinite(v)) throw ParseError("features CSV: non-finite value on line " + std::to_string(line_no), 0, line_no);
      fv.values.push_back(v);
    }
    table.rows.push_back(std::move(fv));
  }
  return table;
}

}  // namespace features
}  // namespace ttpchain
