#pragma once

// Aggregation of per-report relation predictions into recurring temporal
// patterns, category lookup and export.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "ttpchain/error.hpp"
#include "ttpchain/relation.hpp"
#include "ttpchain/relation_classifier.hpp"

namespace ttpchain {

inline constexpr std::size_t kDefaultMinSupport = 2;
inline constexpr std::string_view kUncategorized = "uncategorized";

struct TemporalPattern {
  TechniqueId tx;
  TechniqueId ty;
  Relation relation = Relation::Before;
  std::size_t count = 0;
  std::set<std::string> report_ids;
  std::optional<std::string> category;

  friend bool operator==(const TemporalPattern&, const TemporalPattern&) = default;
};

using PatternKey = std::tuple<TechniqueId, TechniqueId, Relation>;

// Symmetric relations are stored with tx < ty.
inline PatternKey canonical_key(TechniqueId tx, TechniqueId ty, Relation r) {
  if (is_symmetric(r) && ty < tx) std::swap(tx, ty);
  return {std::move(tx), std::move(ty), r};
}

class CategoryMap {
 public:
  void add(const TechniqueId& tx, const TechniqueId& ty, Relation r, const std::string& category) {
    if (r == Relation::Null) throw ValidationError("category map: NULL is not a pattern relation");
    auto key = canonical_key(tx, ty, r);
    auto [it, fresh] = entries_.emplace(key, category);
    if (!fresh && it->second != category)
      throw ValidationError("category map: " + tx + " " + ty + " " + std::string(to_string(r)) +
                            " listed under both '" + it->second + "' and '" + category + "'");
    if (std::find(categories_.begin(), categories_.end(), category) == categories_.end())
      categories_.push_back(category);
  }

  std::optional<std::string> find(const TechniqueId& tx, const TechniqueId& ty, Relation r) const {
    auto it = entries_.find(canonical_key(tx, ty, r));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  const std::vector<std::string>& categories() const { return categories_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::string& version() const { return version_; }
  void set_version(std::string v) { version_ = std::move(v); }

 private:
  std::map<PatternKey, std::string> entries_;
  std::vector<std::string> categories_;  // first-seen order
  std::string version_;
};

namespace patterns {

// Line format: "[Category]" opens a section, "TX TY REL" adds a pattern
// (REL as B/S/C or the full name), '#' starts a comment. A "# version: V"
// comment records the data version.
inline CategoryMap parse_category_map(std::istream& in) {
  CategoryMap map;
  std::optional<std::string> current;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) {
      auto comment = text::detail::trim(std::string_view(line).substr(hash + 1));
      if (comment.starts_with("version:")) map.set_version(std::string(text::detail::trim(comment.substr(8))));
      line.erase(hash);
    }
    auto body = text::detail::trim(line);
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']' || body.size() < 3)
        throw ParseError("category map line " + std::to_string(line_no) + ": malformed section header", 0, line_no);
      current = std::string(text::detail::trim(body.substr(1, body.size() - 2)));
      continue;
    }
    std::istringstream fields{std::string(body)};
    std::string tx, ty, rel, extra;
    if (!(fields >> tx >> ty >> rel) || (fields >> extra))
      throw ParseError("category map line " + std::to_string(line_no) + ": expected 'TX TY RELATION'", 0, line_no);
    if (!current) throw ParseError("category map line " + std::to_string(line_no) + ": pattern outside a section", 0, line_no);
    auto r = parse_relation(rel);
    if (!r || *r == Relation::Null)
      throw ParseError("category map line " + std::to_string(line_no) + ": bad relation '" + rel + "'", 0, line_no);
    if (!is_technique_id(tx) || !is_technique_id(ty))
      throw ParseError("category map line " + std::to_string(line_no) + ": bad technique id", 0, line_no);
    try {
      map.add(tx, ty, *r, *current);
    } catch (const ValidationError& e) {
      throw ValidationError(std::string(e.what()) + " (line " + std::to_string(line_no) + ")", line_no);
    }
  }
  return map;
}

inline CategoryMap load_category_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open category map " + path.string());
  return parse_category_map(in);
}

inline bool pattern_order(const TemporalPattern& a, const TemporalPattern& b) {
  if (a.count != b.count) return a.count > b.count;
  return std::tie(a.relation, a.tx, a.ty) < std::tie(b.relation, b.tx, b.ty);
}

// Distinct reports per (canonical pair, positive relation); keeps count >= n.
inline std::vector<TemporalPattern> mine(std::span<const RelationPrediction> predictions,
                                         std::size_t n = kDefaultMinSupport) {
  if (n < 1) throw ContractViolation("mine: n must be >= 1");
  std::map<PatternKey, std::set<std::string>> support;
  for (const auto& p : predictions)
    for (auto r : kPositiveRelations)
      if (p.labels.contains(r)) support[canonical_key(p.pair.first, p.pair.second, r)].insert(p.report_id);
  std::vector<TemporalPattern> out;
  for (auto& [key, reports] : support) {
    if (reports.size() < n) continue;
    TemporalPattern t;
    std::tie(t.tx, t.ty, t.relation) = key;
    t.count = reports.size();
    t.report_ids = std::move(reports);
    out.push_back(std::move(t));
  }
  std::sort(out.begin(), out.end(), pattern_order);
  return out;
}

inline std::vector<TemporalPattern> categorize(std::vector<TemporalPattern> patterns, const CategoryMap& map) {
  for (auto& p : patterns) p.category = map.find(p.tx, p.ty, p.relation).value_or(std::string(kUncategorized));
  return patterns;
}

// ---- export ----------------------------------------------------------------

enum class ExportFormat { Csv, Json, Dot };

inline ExportFormat parse_export_format(std::string_view s) {
  if (s == "csv") return ExportFormat::Csv;
  if (s == "json") return ExportFormat::Json;
  if (s == "dot") return ExportFormat::Dot;
  throw ValidationError("unknown export format '" + std::string(s) + "' (expected csv, json or dot)");
}

inline std::string join_ids(const std::set<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) {
    if (!out.empty()) out += ';';
    out += id;
  }
  return out;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline constexpr std::string_view kCsvHeader = "tx,ty,relation,count,category,report_ids";

inline std::string to_csv(std::span<const TemporalPattern> ps) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& p : ps) {
    out += csv_field(p.tx) + ',' + csv_field(p.ty) + ',' + std::string(to_string(p.relation)) + ',' +
           std::to_string(p.count) + ',' + csv_field(p.category.value_or("")) + ',' + csv_field(join_ids(p.report_ids)) +
           '\n';
  }
  return out;
}

// RFC 4180 records, quoted fields may span lines.
inline std::vector<std::vector<std::string>> parse_csv_records(std::string_view s) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t k = 0; k < s.size(); ++k) {
    char c = s[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < s.size() && s[k + 1] == '"') {
          field += '"';
          ++k;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && k + 1 < s.size() && s[k + 1] == '\n') ++k;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw ParseError("csv: unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<TemporalPattern> parse_csv(std::string_view s) {
  auto rows = parse_csv_records(s);
  if (rows.empty()) throw ParseError("patterns csv: missing header");
  std::string header;
  for (std::size_t k = 0; k < rows[0].size(); ++k) header += (k ? "," : "") + rows[0][k];
  if (header != kCsvHeader) throw ParseError("patterns csv: unexpected header '" + header + "'");
  std::vector<TemporalPattern> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() != 6) throw ParseError("patterns csv: record " + std::to_string(r) + " has " + std::to_string(f.size()) + " fields", 0, r + 1);
    TemporalPattern p;
    p.tx = f[0];
    p.ty = f[1];
    auto rel = parse_relation(f[2]);
    if (!rel || *rel == Relation::Null) throw ParseError("patterns csv: bad relation '" + f[2] + "'", 0, r + 1);
    p.relation = *rel;
    p.count = std::stoul(f[3]);
    if (!f[4].empty()) p.category = f[4];
    std::size_t start = 0;
    while (start < f[5].size()) {
      auto end = f[5].find(';', start);
      if (end == std::string::npos) end = f[5].size();
      p.report_ids.insert(f[5].substr(start, end - start));
      start = end + 1;
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline nlohmann::json to_json(const TemporalPattern& p) {
  nlohmann::json j = {{"tx", p.tx},
                      {"ty", p.ty},
                      {"relation", std::string(to_string(p.relation))},
                      {"count", p.count},
                      {"report_ids", p.report_ids}};
  j["category"] = p.category ? nlohmann::json(*p.category) : nlohmann::json(nullptr);
  return j;
}

inline std::string to_json_document(std::span<const TemporalPattern> ps) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : ps) arr.push_back(to_json(p));
  return nlohmann::json{{"schema", "ttpchain.patterns/1"}, {"patterns", arr}}.dump(2) + "\n";
}

inline std::string dot_id(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

// BEFORE edges point tx -> ty; symmetric relations are drawn undirected and
// dashed.
inline std::string to_dot(std::span<const TemporalPattern> ps) {
  std::string out = "digraph temporal_patterns {\n  rankdir=LR;\n  node [shape=box];\n";
  for (const auto& p : ps) {
    out += "  " + dot_id(p.tx) + " -> " + dot_id(p.ty) + " [label=" +
           dot_id(std::string(to_string(p.relation)) + " (" + std::to_string(p.count) + ")");
    if (is_symmetric(p.relation)) out += ", dir=none, style=dashed";
    out += "];\n";
  }
  return out + "}\n";
}

inline std::string export_patterns(std::span<const TemporalPattern> ps, ExportFormat f) {
  switch (f) {
    case ExportFormat::Csv: return to_csv(ps);
    case ExportFormat::Json: return to_json_document(ps);
    case ExportFormat::Dot: return to_dot(ps);
  }
  return {};
}

inline std::string export_patterns(std::span<const TemporalPattern> ps, std::string_view format) {
  return export_patterns(ps, parse_export_format(format));
}

}  // namespace patterns
}  // namespace ttpchain
