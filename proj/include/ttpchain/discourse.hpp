#pragma once

// Rule-based coreference links and discourse relations between sentences.

#include <algorithm>
#include <array>
#include <cctype>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ttpchain/corpus.hpp"
#include "ttpchain/markers.hpp"
#include "ttpchain/text.hpp"

namespace ttpchain {

enum class DiscourseRelation : std::uint8_t { Next = 0, Elaboration = 1, IfElse = 2, List = 3, Misc = 4 };

inline constexpr std::array<DiscourseRelation, 5> kAllDiscourseRelations = {
    DiscourseRelation::Next, DiscourseRelation::Elaboration, DiscourseRelation::IfElse, DiscourseRelation::List,
    DiscourseRelation::Misc};

inline std::string_view to_string(DiscourseRelation r) {
  switch (r) {
    case DiscourseRelation::Next: return "next";
    case DiscourseRelation::Elaboration: return "elaboration";
    case DiscourseRelation::IfElse: return "if_else";
    case DiscourseRelation::List: return "list";
    case DiscourseRelation::Misc: return "misc";
  }
  return "misc";
}

using SentenceLink = std::pair<std::size_t, std::size_t>;  // (i, j), i < j

namespace discourse {

inline constexpr std::size_t kCorefWindow = 3;
inline constexpr double kListJaccard = 0.6;

inline bool is_conditional(std::string_view w) {
  return w == "if" || w == "otherwise" || w == "unless" || w == "else";
}
inline bool is_demonstrative(std::string_view w) {
  return w == "this" || w == "these" || w == "that" || w == "those";
}
inline bool is_anaphor(std::string_view w) {
  return w == "it" || w == "they" || w == "this" || w == "that" || w == "which";
}

// Content-word heuristic standing in for a POS tagger.
inline bool is_noun_like(std::string_view w, const MarkerLexicon& lexicon = MarkerLexicon::standard()) {
  if (w.size() < 3 || text::is_stopword(w) || lexicon.contains(w)) return false;
  if (is_conditional(w) || is_demonstrative(w) || is_anaphor(w)) return false;
  return std::any_of(w.begin(), w.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); });
}

// "macros" and "macro" compare equal.
inline std::string_view stem(std::string_view w) {
  if (w.size() > 3 && w.back() == 's' && w[w.size() - 2] != 's') return w.substr(0, w.size() - 1);
  return w;
}

inline bool mentions(const Sentence& s, std::string_view word) {
  auto target = stem(word);
  return std::any_of(s.words.begin(), s.words.end(), [&](const std::string& w) { return stem(w) == target; });
}

// Sentence starts with a bullet, a number, or reads "Term - description".
inline bool looks_enumerated(std::string_view text) {
  if (text::detail::starts_with_bullet(text)) return true;
  auto first_space = text.find_first_of(" \t");
  if (first_space == std::string_view::npos) return false;
  auto rest = text.substr(first_space);
  auto k = rest.find_first_not_of(" \t");
  if (k == std::string_view::npos) return false;
  rest = rest.substr(k);
  for (std::string_view dash : {"\xE2\x80\x94", "\xE2\x80\x93", "-"})
    if (rest.starts_with(dash) && rest.size() > dash.size() &&
        text::detail::is_space(static_cast<unsigned char>(rest[dash.size()])))
      return true;
  return false;
}

inline double word_jaccard(const Sentence& a, const Sentence& b) {
  std::set<std::string_view> sa(a.words.begin(), a.words.end()), sb(b.words.begin(), b.words.end());
  if (sa.empty() && sb.empty()) return 0.0;
  std::size_t inter = 0;
  for (auto w : sa) inter += sb.contains(w) ? 1 : 0;
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

// Rule cascade, first match wins: IF_ELSE, NEXT, LIST, ELABORATION, MISC.
inline DiscourseRelation classify_discourse(const Sentence& s1, const Sentence& s2, bool coref,
                                            const MarkerLexicon& lexicon = MarkerLexicon::standard()) {
  auto has_conditional = [](const Sentence& s) {
    return std::any_of(s.words.begin(), s.words.end(), [](const std::string& w) { return is_conditional(w); });
  };
  if (has_conditional(s1) || has_conditional(s2)) return DiscourseRelation::IfElse;

  for (std::size_t k = 0; k < 3 && k < s2.words.size(); ++k)
    if (lexicon.before_markers.contains(s2.words[k])) return DiscourseRelation::Next;

  if (word_jaccard(s1, s2) >= kListJaccard || (looks_enumerated(s1.text) && looks_enumerated(s2.text)))
    return DiscourseRelation::List;

  if (coref) return DiscourseRelation::Elaboration;
  for (std::size_t k = 0; k < s2.words.size(); ++k) {
    if (!is_demonstrative(s2.words[k])) continue;
    for (std::size_t m = k + 1; m <= k + 2 && m < s2.words.size(); ++m)
      if (is_noun_like(s2.words[m], lexicon) && mentions(s1, s2.words[m])) return DiscourseRelation::Elaboration;
  }
  return DiscourseRelation::Misc;
}

// (i, j) with 0 < j - i <= 3 is linked when
//  (a) sentence j has an anaphor (it/they/this/that/which) in its first four
//      words and i is the nearest earlier sentence holding a content word, or
//  (b) sentence j has "the"/"this" followed within two words by a content
//      word that also occurs in sentence i.
inline std::set<SentenceLink> coref_links(const Report& report,
                                          const MarkerLexicon& lexicon = MarkerLexicon::standard()) {
  std::set<SentenceLink> links;
  const auto& ss = report.sentences;
  for (std::size_t j = 1; j < ss.size(); ++j) {
    const auto& words = ss[j].words;
    std::size_t lo = j >= kCorefWindow ? j - kCorefWindow : 0;

    bool anaphor = false;
    for (std::size_t k = 0; k < 4 && k < words.size(); ++k) anaphor = anaphor || is_anaphor(words[k]);
    if (anaphor) {
      for (std::size_t i = j; i-- > lo;) {
        const auto& wi = ss[i].words;
        if (std::any_of(wi.begin(), wi.end(), [&](const std::string& w) { return is_noun_like(w, lexicon); })) {
          links.emplace(i, j);
          break;
        }
      }
    }

    for (std::size_t k = 0; k < words.size(); ++k) {
      if (words[k] != "the" && words[k] != "this") continue;
      for (std::size_t m = k + 1; m <= k + 2 && m < words.size(); ++m) {
        if (!is_noun_like(words[m], lexicon)) continue;
        for (std::size_t i = lo; i < j; ++i)
          if (mentions(ss[i], words[m])) links.emplace(i, j);
      }
    }
  }
  return links;
}

}  // namespace discourse
}  // namespace ttpchain
