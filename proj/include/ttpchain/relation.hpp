#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ttpchain/error.hpp"

namespace ttpchain {

using TechniqueId = std::string;

enum class Relation : std::uint8_t { Before = 0, SimultaneousOverlap = 1, Concurrent = 2, Null = 3 };

inline constexpr std::array<Relation, 4> kAllRelations = {
    Relation::Before, Relation::SimultaneousOverlap, Relation::Concurrent, Relation::Null};
inline constexpr std::array<Relation, 3> kPositiveRelations = {
    Relation::Before, Relation::SimultaneousOverlap, Relation::Concurrent};

inline constexpr std::size_t index_of(Relation r) { return static_cast<std::size_t>(r); }

inline constexpr bool is_symmetric(Relation r) {
  return r == Relation::SimultaneousOverlap || r == Relation::Concurrent;
}

inline std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::Before: return "BEFORE";
    case Relation::SimultaneousOverlap: return "SIMULTANEOUS_OVERLAP";
    case Relation::Concurrent: return "CONCURRENT";
    case Relation::Null: return "NULL";
  }
  return "NULL";
}

// Accepts the canonical names plus the hyphenated and single-letter forms
// used in published pattern tables (B / S / C).
inline std::optional<Relation> parse_relation(std::string_view s) {
  if (s == "BEFORE" || s == "B") return Relation::Before;
  if (s == "SIMULTANEOUS_OVERLAP" || s == "SIMULTANEOUS-OVERLAP" || s == "S")
    return Relation::SimultaneousOverlap;
  if (s == "CONCURRENT" || s == "C") return Relation::Concurrent;
  if (s == "NULL") return Relation::Null;
  return std::nullopt;
}

// Small bit set over the four relation labels.
class RelationSet {
 public:
  constexpr RelationSet() = default;
  RelationSet(std::initializer_list<Relation> rs) {
    for (auto r : rs) insert(r);
  }

  constexpr void insert(Relation r) { bits_ |= bit(r); }
  constexpr void erase(Relation r) { bits_ &= static_cast<std::uint8_t>(~bit(r)); }
  constexpr bool contains(Relation r) const { return (bits_ & bit(r)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }

  std::size_t size() const {
    std::size_t n = 0;
    for (auto r : kAllRelations) n += contains(r) ? 1 : 0;
    return n;
  }

  std::vector<Relation> to_vector() const {
    std::vector<Relation> out;
    for (auto r : kAllRelations)
      if (contains(r)) out.push_back(r);
    return out;
  }

  // NULL, if present, must be the only label.
  constexpr bool null_exclusive() const {
    return !contains(Relation::Null) || bits_ == bit(Relation::Null);
  }

  friend constexpr bool operator==(RelationSet a, RelationSet b) { return a.bits_ == b.bits_; }

 private:
  static constexpr std::uint8_t bit(Relation r) {
    return static_cast<std::uint8_t>(1u << index_of(r));
  }
  std::uint8_t bits_ = 0;
};

// `T` followed by exactly four digits, optionally a `.ddd` sub-technique suffix.
inline bool is_technique_id(std::string_view id, bool allow_subtechnique = false) {
  auto digits = [](std::string_view s) {
    if (s.empty()) return false;
    for (char c : s)
      if (c < '0' || c > '9') return false;
    return true;
  };
  if (id.size() < 5 || id[0] != 'T' || !digits(id.substr(1, 4))) return false;
  if (id.size() == 5) return true;
  if (!allow_subtechnique || id[5] != '.') return false;
  return digits(id.substr(6));
}

// T1566.001 -> T1566
inline TechniqueId parent_technique(std::string_view id) {
  auto dot = id.find('.');
  return TechniqueId(dot == std::string_view::npos ? id : id.substr(0, dot));
}

}  // namespace ttpchain
