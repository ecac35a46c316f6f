#pragma once

// CTI reports, ground-truth temporal-relation annotations and the ordered
// technique-pair universe.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ttpchain/attack_kb.hpp"
#include "ttpchain/error.hpp"
#include "ttpchain/relation.hpp"
#include "ttpchain/text.hpp"

namespace ttpchain {

struct Report {
  std::string id;
  std::vector<Sentence> sentences;
  std::optional<std::string> source_uri;
  std::optional<std::string> provenance;

  std::size_t size() const { return sentences.size(); }
};

using TechniquePair = std::pair<TechniqueId, TechniqueId>;

struct RelationAnnotation {
  std::string report_id;
  TechniquePair pair;
  RelationSet labels;
  // Added by the loader to close a symmetric relation; not in the file.
  bool inferred_mirror = false;
};

struct PairUniverse {
  std::vector<TechniquePair> pairs;
};

namespace corpus {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Report make_report(std::string id, std::string_view text) {
  return Report{std::move(id), text::segment_sentences(text), std::nullopt, std::nullopt};
}

inline Report load_report(const std::filesystem::path& path) {
  auto r = make_report(path.stem().string(), read_file(path));
  r.source_uri = path.string();
  return r;
}

// Every `*.txt` file in `dir`, ordered by report id (the file stem).
inline std::vector<Report> load_reports(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.stem().string() < b.stem().string(); });
  std::vector<Report> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_report(f));
  return out;
}

// All ordered pairs of distinct techniques, lexicographic.
inline PairUniverse pair_universe(const std::set<TechniqueId>& techniques) {
  PairUniverse u;
  if (techniques.size() < 2) return u;
  u.pairs.reserve(techniques.size() * (techniques.size() - 1));
  for (const auto& a : techniques)
    for (const auto& b : techniques)
      if (a != b) u.pairs.emplace_back(a, b);
  return u;
}

// Validates and merges annotations. `known` decides which technique ids are
// acceptable; duplicated (report, tx, ty) lines are unioned. For every
// SIMULTANEOUS_OVERLAP / CONCURRENT label the mirrored pair receives the same
// label, flagged `inferred_mirror` when it was not in the input.
template <typename KnownPredicate>
std::vector<RelationAnnotation> parse_annotations(std::istream& in, KnownPredicate known) {
  using Key = std::tuple<std::string, TechniqueId, TechniqueId>;
  std::map<Key, RelationAnnotation> merged;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::detail::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("annotations line " + std::to_string(line_no) + ": " + e.what(), e.byte, line_no);
    }
    auto fail = [&](const std::string& why) {
      throw ValidationError("annotations line " + std::to_string(line_no) + ": " + why, line_no);
    };
    if (!j.is_object() || !j.contains("report_id") || !j.contains("tx") || !j.contains("ty") ||
        !j.contains("labels") || !j["labels"].is_array())
      fail("expected {report_id, tx, ty, labels[]}");
    RelationAnnotation a;
    a.report_id = j["report_id"].get<std::string>();
    a.pair = {j["tx"].get<std::string>(), j["ty"].get<std::string>()};
    for (const auto* id : {&a.pair.first, &a.pair.second})
      if (!known(*id)) fail("unknown technique id '" + *id + "'");
    if (a.pair.first == a.pair.second) fail("self-pair (" + a.pair.first + ", " + a.pair.second + ")");
    for (const auto& l : j["labels"]) {
      auto r = l.is_string() ? parse_relation(l.get<std::string>()) : std::nullopt;
      if (!r) fail("unknown relation label " + l.dump());
      a.labels.insert(*r);
    }
    if (a.labels.empty()) fail("empty label set");
    if (!a.labels.null_exclusive()) fail("NULL combined with another label");

    Key key{a.report_id, a.pair.first, a.pair.second};
    auto [it, fresh] = merged.try_emplace(key, a);
    if (!fresh) {
      for (auto r : a.labels.to_vector()) it->second.labels.insert(r);
      it->second.inferred_mirror = false;
      if (!it->second.labels.null_exclusive()) fail("NULL combined with another label (merged duplicate)");
    }
  }

  // Close symmetric labels over mirrored pairs. Collect first so that newly
  // inserted mirrors do not disturb the iteration.
  std::vector<std::pair<Key, Relation>> needed;
  for (const auto& [key, a] : merged)
    for (auto r : {Relation::SimultaneousOverlap, Relation::Concurrent})
      if (a.labels.contains(r)) needed.push_back({Key{a.report_id, a.pair.second, a.pair.first}, r});
  for (const auto& [mk, r] : needed) {
    auto it = merged.find(mk);
    if (it == merged.end()) {
      const auto& [rid, tx, ty] = mk;
      merged.emplace(mk, RelationAnnotation{rid, {tx, ty}, RelationSet{r}, true});
    } else if (it->second.labels.contains(Relation::Null)) {
      throw ValidationError("annotations: (" + it->second.pair.first + ", " + it->second.pair.second + ") in " +
                            it->second.report_id + " is NULL but its mirror is " + std::string(to_string(r)));
    } else {
      it->second.labels.insert(r);
    }
  }

  std::vector<RelationAnnotation> out;
  out.reserve(merged.size());
  for (auto& [key, a] : merged) out.push_back(std::move(a));
  return out;
}

inline std::vector<RelationAnnotation> parse_annotations(std::istream& in, const TechniqueCatalog& catalog) {
  return parse_annotations(in, [&](const TechniqueId& id) { return catalog.contains(id); });
}

inline std::vector<RelationAnnotation> load_annotations(const std::filesystem::path& path,
                                                        const TechniqueCatalog& catalog) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_annotations(in, catalog);
}

// Without a catalog, any syntactically valid parent technique id is accepted.
inline std::vector<RelationAnnotation> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_annotations(in, [](const TechniqueId& id) { return is_technique_id(id); });
}

// (report, tx, ty) -> labels. Pairs missing from the map are NULL.
using AnnotationIndex = std::map<std::tuple<std::string, TechniqueId, TechniqueId>, RelationSet>;

inline AnnotationIndex index_annotations(const std::vector<RelationAnnotation>& annotations) {
  AnnotationIndex idx;
  for (const auto& a : annotations) idx[{a.report_id, a.pair.first, a.pair.second}] = a.labels;
  return idx;
}

inline RelationSet lookup_labels(const AnnotationIndex& idx, const std::string& report_id,
                                 const TechniquePair& pair) {
  auto it = idx.find({report_id, pair.first, pair.second});
  return it == idx.end() ? RelationSet{Relation::Null} : it->second;
}

}  // namespace corpus
}  // namespace ttpchain
