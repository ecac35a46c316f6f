#pragma once

// ATT&CK knowledge base: technique catalog, procedure-example training set and
// the actor x technique usage matrix, all read from a STIX 2.x bundle.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ttpchain/error.hpp"
#include "ttpchain/relation.hpp"
#include "ttpchain/text.hpp"

namespace ttpchain {

struct TechniqueRecord {
  TechniqueId id;
  std::string name;
  std::vector<std::string> procedure_examples;

  friend bool operator==(const TechniqueRecord&, const TechniqueRecord&) = default;
};

// Parent techniques only, sorted by id.
class TechniqueCatalog {
 public:
  TechniqueCatalog() = default;
  TechniqueCatalog(std::vector<TechniqueRecord> records, std::string version)
      : techniques_(std::move(records)), version_(std::move(version)) {
    std::sort(techniques_.begin(), techniques_.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < techniques_.size(); ++i) {
      const auto& t = techniques_[i];
      if (!is_technique_id(t.id))
        throw ValidationError("catalog: invalid technique id '" + t.id + "'");
      if (t.name.empty()) throw ValidationError("catalog: technique " + t.id + " has no name");
      if (i > 0 && techniques_[i - 1].id == t.id)
        throw ValidationError("catalog: duplicate technique id " + t.id);
    }
  }

  const std::vector<TechniqueRecord>& techniques() const { return techniques_; }
  const std::string& version() const { return version_; }
  std::size_t size() const { return techniques_.size(); }
  bool empty() const { return techniques_.empty(); }

  const TechniqueRecord* find(std::string_view id) const {
    auto it = std::lower_bound(techniques_.begin(), techniques_.end(), id,
                               [](const TechniqueRecord& r, std::string_view v) { return r.id < v; });
    return (it != techniques_.end() && it->id == id) ? &*it : nullptr;
  }
  bool contains(std::string_view id) const { return find(id) != nullptr; }

  std::vector<TechniqueId> ids() const {
    std::vector<TechniqueId> out;
    out.reserve(techniques_.size());
    for (const auto& t : techniques_) out.push_back(t.id);
    return out;
  }

  friend bool operator==(const TechniqueCatalog&, const TechniqueCatalog&) = default;

 private:
  std::vector<TechniqueRecord> techniques_;
  std::string version_;
};

// Binary actor x technique matrix. Rows are actors (groups, software,
// campaigns) with at least one technique; columns are every catalog
// technique. Both axes are sorted by id.
class UsageMatrix {
 public:
  UsageMatrix() = default;
  UsageMatrix(std::vector<std::string> actors, std::vector<TechniqueId> techniques,
              std::vector<std::uint8_t> cells, std::size_t skipped_relationships = 0)
      : actors_(std::move(actors)),
        techniques_(std::move(techniques)),
        cells_(std::move(cells)),
        skipped_(skipped_relationships) {
    if (cells_.size() != actors_.size() * techniques_.size())
      throw ValidationError("usage matrix: cell count does not match dimensions");
    for (auto c : cells_)
      if (c > 1) throw ValidationError("usage matrix: cells must be 0 or 1");
    auto unique_sorted = [](auto v) {
      std::sort(v.begin(), v.end());
      return std::adjacent_find(v.begin(), v.end()) == v.end();
    };
    if (!unique_sorted(actors_) || !unique_sorted(techniques_))
      throw ValidationError("usage matrix: duplicate row or column id");
    for (std::size_t j = 0; j < techniques_.size(); ++j) column_of_.emplace(techniques_[j], j);
  }

  std::size_t rows() const { return actors_.size(); }
  std::size_t cols() const { return techniques_.size(); }
  const std::vector<std::string>& actors() const { return actors_; }
  const std::vector<TechniqueId>& techniques() const { return techniques_; }
  const std::vector<std::uint8_t>& cells() const { return cells_; }
  std::size_t skipped_relationships() const { return skipped_; }

  std::uint8_t at(std::size_t row, std::size_t col) const { return cells_[row * cols() + col]; }

  std::optional<std::size_t> column_index(std::string_view id) const {
    auto it = column_of_.find(std::string(id));
    if (it == column_of_.end()) return std::nullopt;
    return it->second;
  }

  friend bool operator==(const UsageMatrix& a, const UsageMatrix& b) {
    return a.actors_ == b.actors_ && a.techniques_ == b.techniques_ && a.cells_ == b.cells_;
  }

 private:
  std::vector<std::string> actors_;
  std::vector<TechniqueId> techniques_;
  std::vector<std::uint8_t> cells_;
  std::size_t skipped_ = 0;
  std::unordered_map<std::string, std::size_t> column_of_;
};

struct LabeledSentence {
  std::string sentence;
  std::set<TechniqueId> labels;
};

struct ActionDataset {
  std::vector<LabeledSentence> examples;

  std::set<TechniqueId> techniques() const {
    std::set<TechniqueId> out;
    for (const auto& e : examples) out.insert(e.labels.begin(), e.labels.end());
    return out;
  }
};

namespace kb {

inline constexpr std::string_view kCatalogSchema = "ttpchain.catalog/1";
inline constexpr std::string_view kUsageSchema = "ttpchain.usage/1";

namespace detail {

using nlohmann::json;

inline json parse_bundle(std::string_view bytes) {
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("STIX bundle: ") + e.what(), e.byte);
  }
  if (!doc.is_object() || !doc.contains("objects") || !doc["objects"].is_array())
    throw ParseError("STIX bundle: missing 'objects' array");
  return doc;
}

inline bool is_active(const json& obj) {
  return !obj.value("revoked", false) && !obj.value("x_mitre_deprecated", false);
}

inline std::string string_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  return (it != obj.end() && it->is_string()) ? it->get<std::string>() : std::string{};
}

// First external_id of a `mitre-*` reference, else any external_id.
inline std::string external_id(const json& obj) {
  auto refs = obj.find("external_references");
  if (refs == obj.end() || !refs->is_array()) return {};
  std::string fallback;
  for (const auto& ref : *refs) {
    auto id = string_field(ref, "external_id");
    if (id.empty()) continue;
    if (string_field(ref, "source_name").starts_with("mitre")) return id;
    if (fallback.empty()) fallback = id;
  }
  return fallback;
}

// Drops "(Citation: ...)" markers and turns markdown links into their text.
inline std::string clean_description(std::string_view raw) {
  static const std::regex citation(R"(\s*\(Citation:[^)]*\))");
  static const std::regex link(R"(\[([^\]]*)\]\([^)]*\))");
  static const std::regex spaces(R"(\s+)");
  std::string s(raw);
  s = std::regex_replace(s, citation, "");
  s = std::regex_replace(s, link, "$1");
  s = std::regex_replace(s, spaces, " ");
  return std::string(text::detail::trim(s));
}

inline bool is_actor_type(std::string_view type) {
  return type == "intrusion-set" || type == "malware" || type == "tool" || type == "campaign";
}

// STIX id -> technique id (possibly a sub-technique) for active attack-patterns.
inline std::unordered_map<std::string, TechniqueId> technique_refs(const json& objects) {
  std::unordered_map<std::string, TechniqueId> out;
  for (const auto& obj : objects) {
    if (string_field(obj, "type") != "attack-pattern" || !is_active(obj)) continue;
    auto ext = external_id(obj);
    if (!is_technique_id(ext, true)) continue;
    out.emplace(string_field(obj, "id"), ext);
  }
  return out;
}

}  // namespace detail

// One record per active attack-pattern; sub-techniques fold into their parent
// and contribute their procedure examples to it. Procedure examples are the
// sentences of `uses` relationship descriptions targeting the technique.
inline TechniqueCatalog parse_stix(std::string_view bundle_bytes) {
  using detail::string_field;
  auto doc = detail::parse_bundle(bundle_bytes);
  const auto& objects = doc["objects"];

  struct Draft {
    std::string name;
    bool name_from_parent = false;
    std::vector<std::string> examples;
  };
  std::map<TechniqueId, Draft> drafts;
  std::string version;

  for (const auto& obj : objects) {
    auto type = string_field(obj, "type");
    if (type == "x-mitre-collection" && version.empty()) {
      version = string_field(obj, "x_mitre_version");
      continue;
    }
    if (type != "attack-pattern" || !detail::is_active(obj)) continue;
    auto ext = detail::external_id(obj);
    if (!is_technique_id(ext, true)) continue;
    auto parent = parent_technique(ext);
    auto& d = drafts[parent];
    auto name = string_field(obj, "name");
    if (ext == parent) {
      d.name = name;
      d.name_from_parent = true;
    } else if (!d.name_from_parent && d.name.empty()) {
      d.name = name;  // provisional until the parent object shows up
    }
  }
  if (drafts.empty()) throw EmptyCatalogError("STIX bundle contains no active attack-pattern objects");

  auto refs = detail::technique_refs(objects);
  for (const auto& obj : objects) {
    if (string_field(obj, "type") != "relationship" || !detail::is_active(obj)) continue;
    if (string_field(obj, "relationship_type") != "uses") continue;
    auto target = refs.find(string_field(obj, "target_ref"));
    if (target == refs.end()) continue;
    auto description = detail::clean_description(string_field(obj, "description"));
    if (description.empty()) continue;
    auto& d = drafts[parent_technique(target->second)];
    for (auto& s : text::segment_sentences(description)) d.examples.push_back(std::move(s.text));
  }

  std::vector<TechniqueRecord> records;
  records.reserve(drafts.size());
  for (auto& [id, d] : drafts) {
    if (d.name.empty()) d.name = id;
    records.push_back({id, std::move(d.name), std::move(d.examples)});
  }
  return TechniqueCatalog(std::move(records), version);
}

// Cell (actor, technique) = 1 iff the actor has a `uses` relationship to the
// technique or one of its sub-techniques. Relationships whose target is an
// attack-pattern missing from the catalog (or revoked) are counted in
// skipped_relationships.
inline UsageMatrix build_usage_matrix(std::string_view bundle_bytes, const TechniqueCatalog& catalog) {
  using detail::string_field;
  auto doc = detail::parse_bundle(bundle_bytes);
  const auto& objects = doc["objects"];

  std::unordered_map<std::string, std::string> actor_ids;  // stix id -> display id
  std::unordered_map<std::string, bool> attack_pattern_ids;
  for (const auto& obj : objects) {
    auto type = string_field(obj, "type");
    if (type == "attack-pattern") {
      attack_pattern_ids[string_field(obj, "id")] = true;
    } else if (detail::is_actor_type(type) && detail::is_active(obj)) {
      auto ext = detail::external_id(obj);
      auto stix = string_field(obj, "id");
      actor_ids.emplace(stix, ext.empty() ? stix : ext);
    }
  }
  auto refs = detail::technique_refs(objects);

  std::map<std::string, std::set<TechniqueId>> usage;
  std::size_t skipped = 0;
  for (const auto& obj : objects) {
    if (string_field(obj, "type") != "relationship" || !detail::is_active(obj)) continue;
    if (string_field(obj, "relationship_type") != "uses") continue;
    auto actor = actor_ids.find(string_field(obj, "source_ref"));
    if (actor == actor_ids.end()) continue;
    auto target_ref = string_field(obj, "target_ref");
    if (!attack_pattern_ids.contains(target_ref)) continue;  // software used by a group, etc.
    auto target = refs.find(target_ref);
    if (target == refs.end() || !catalog.contains(parent_technique(target->second))) {
      ++skipped;
      continue;
    }
    usage[actor->second].insert(parent_technique(target->second));
  }

  auto techniques = catalog.ids();
  std::vector<std::string> actors;
  std::vector<std::uint8_t> cells;
  cells.reserve(usage.size() * techniques.size());
  for (const auto& [actor, used] : usage) {
    actors.push_back(actor);
    for (const auto& t : techniques) cells.push_back(used.contains(t) ? 1 : 0);
  }
  return UsageMatrix(std::move(actors), std::move(techniques), std::move(cells), skipped);
}

// Catalog procedure examples (label = owning technique) plus `extra` manual
// mappings; techniques with fewer than `min_examples` examples are removed
// from every label set and examples left without labels are dropped.
inline ActionDataset build_action_dataset(const TechniqueCatalog& catalog, std::size_t min_examples = 20,
                                          const std::vector<LabeledSentence>& extra = {}) {
  if (min_examples < 1) throw ContractViolation("build_action_dataset: min_examples must be >= 1");

  std::vector<LabeledSentence> all;
  for (const auto& t : catalog.techniques())
    for (const auto& ex : t.procedure_examples)
      if (!text::detail::trim(ex).empty()) all.push_back({ex, {t.id}});

  std::set<std::string> unknown;
  for (const auto& e : extra) {
    LabeledSentence folded{e.sentence, {}};
    for (const auto& label : e.labels) {
      auto parent = parent_technique(label);
      if (!catalog.contains(parent))
        unknown.insert(label);
      else
        folded.labels.insert(parent);
    }
    if (!folded.labels.empty() && !text::detail::trim(folded.sentence).empty())
      all.push_back(std::move(folded));
  }
  if (!unknown.empty()) {
    std::string msg = "extra mappings reference unknown techniques:";
    for (const auto& id : unknown) msg += " " + id;
    throw ValidationError(msg);
  }

  std::map<TechniqueId, std::size_t> counts;
  for (const auto& e : all)
    for (const auto& l : e.labels) ++counts[l];

  ActionDataset out;
  for (auto& e : all) {
    std::erase_if(e.labels, [&](const TechniqueId& l) { return counts[l] < min_examples; });
    if (!e.labels.empty()) out.examples.push_back(std::move(e));
  }
  return out;
}

// ---- serialization -------------------------------------------------------

inline nlohmann::json to_json(const TechniqueCatalog& catalog) {
  nlohmann::json techniques = nlohmann::json::array();
  for (const auto& t : catalog.techniques())
    techniques.push_back({{"id", t.id}, {"name", t.name}, {"procedure_examples", t.procedure_examples}});
  return {{"schema", kCatalogSchema}, {"version", catalog.version()}, {"techniques", techniques}};
}

inline TechniqueCatalog catalog_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kCatalogSchema)
    throw ParseError("catalog: unsupported schema '" + j.value("schema", "") + "'");
  std::vector<TechniqueRecord> records;
  for (const auto& t : j.at("techniques"))
    records.push_back({t.at("id").get<std::string>(), t.at("name").get<std::string>(),
                       t.at("procedure_examples").get<std::vector<std::string>>()});
  return TechniqueCatalog(std::move(records), j.value("version", ""));
}

inline nlohmann::json to_json(const UsageMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::vector<int> row(m.cols());
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] = m.at(r, c);
    rows.push_back(row);
  }
  return {{"schema", kUsageSchema},
          {"actors", m.actors()},
          {"techniques", m.techniques()},
          {"cells", rows},
          {"skipped_relationships", m.skipped_relationships()}};
}

inline UsageMatrix usage_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kUsageSchema)
    throw ParseError("usage matrix: unsupported schema '" + j.value("schema", "") + "'");
  auto actors = j.at("actors").get<std::vector<std::string>>();
  auto techniques = j.at("techniques").get<std::vector<std::string>>();
  std::vector<std::uint8_t> cells;
  for (const auto& row : j.at("cells")) {
    if (row.size() != techniques.size()) throw ParseError("usage matrix: ragged row");
    for (const auto& c : row) cells.push_back(static_cast<std::uint8_t>(c.get<int>()));
  }
  return UsageMatrix(std::move(actors), std::move(techniques), std::move(cells),
                     j.value("skipped_relationships", std::size_t{0}));
}

}  // namespace kb
}  // namespace ttpchain
