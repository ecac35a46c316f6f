#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "ttpchain/relation.hpp"

namespace ttpchain {

// Temporal marker words, one set per positive relation class. Matching is
// whole-token equality on lowercased words.
struct MarkerLexicon {
  std::set<std::string, std::less<>> before_markers;
  std::set<std::string, std::less<>> overlap_markers;
  std::set<std::string, std::less<>> concurrent_markers;

  static const MarkerLexicon& standard() {
    static const MarkerLexicon lexicon{
        {"after", "afterward", "following", "immediately", "instantly", "later", "next", "then", "succeeding",
         "subsequent", "subsequently", "before", "previous", "prior", "previously", "preceding"},
        {"during", "while", "within", "through", "throughout"},
        {"concurrent", "concurrently", "contemporary", "simultaneous", "simultaneously"},
    };
    return lexicon;
  }

  std::optional<Relation> classify(std::string_view word) const {
    if (before_markers.contains(word)) return Relation::Before;
    if (overlap_markers.contains(word)) return Relation::SimultaneousOverlap;
    if (concurrent_markers.contains(word)) return Relation::Concurrent;
    return std::nullopt;
  }

  bool contains(std::string_view word) const { return classify(word).has_value(); }

  std::size_t size() const { return before_markers.size() + overlap_markers.size() + concurrent_markers.size(); }
};

// Marker hits per positive relation class: [BEFORE, OVERLAP, CONCURRENT].
using MarkerCounts = std::array<double, 3>;

template <typename Words>
MarkerCounts count_markers(const MarkerLexicon& lexicon, const Words& words) {
  MarkerCounts c{};
  for (const auto& w : words)
    if (auto r = lexicon.classify(w)) c[index_of(*r)] += 1.0;
  return c;
}

}  // namespace ttpchain
