#pragma once

// Sentence segmentation and tokenization for CTI report prose.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace ttpchain {

struct Sentence {
  std::size_t index = 0;
  std::string text;
  // Lowercased, stopword-filtered tokens.
  std::vector<std::string> tokens;
  // Lowercased tokens before stopword filtering; marker, pronoun and
  // demonstrative heuristics need the function words.
  std::vector<std::string> words;
};

namespace text {

inline constexpr std::string_view kStopwordListVersion = "stopwords-en-1";

// Common English function words. Temporal markers, conditionals and
// demonstratives are absent on purpose: they are signal, not noise.
inline const std::unordered_set<std::string_view>& stopwords() {
  static const std::unordered_set<std::string_view> words = {
      "a",       "about",   "above",   "again",  "against", "all",     "am",      "an",
      "and",     "any",     "are",     "as",     "at",      "be",      "because", "been",
      "being",   "below",   "between", "both",   "but",     "by",      "can",     "could",
      "did",     "do",      "does",    "doing",  "down",    "each",    "few",     "for",
      "from",    "further", "had",     "has",    "have",    "having",  "he",      "her",
      "here",    "hers",    "herself", "him",    "himself", "his",     "how",     "i",
      "in",      "into",    "is",      "it",     "its",     "itself",  "just",    "me",
      "more",    "most",    "my",      "myself", "no",      "nor",     "not",     "now",
      "of",      "off",     "on",      "once",   "only",    "or",      "other",   "our",
      "ours",    "out",     "over",    "own",    "same",    "she",     "should",  "so",
      "some",    "such",    "than",    "the",    "their",   "theirs",  "them",    "themselves",
      "there",   "they",    "to",      "too",    "under",   "until",   "up",      "very",
      "was",     "we",      "were",    "what",   "when",    "where",   "which",   "who",
      "whom",    "why",     "will",    "with",   "would",   "you",     "your",    "yours",
      "yourself", "also",   "via",     "may",    "might",   "must",    "shall",   "us",
      "upon",    "onto",    "per",     "yet",    "whether", "whose",   "ought",   "s",
  };
  return words;
}

inline bool is_stopword(std::string_view w) { return stopwords().contains(w); }

namespace detail {

inline bool is_token_char(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
}

inline bool is_space(unsigned char c) { return std::isspace(c) != 0; }

inline std::string_view trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// Leading "-", "*", "+", "•" or "12." / "12)" followed by whitespace.
inline bool starts_with_bullet(std::string_view line) {
  line = trim(line);
  if (line.empty()) return false;
  auto followed_by_space = [&](std::size_t pos) {
    return pos < line.size() && is_space(static_cast<unsigned char>(line[pos]));
  };
  if (line[0] == '-' || line[0] == '*' || line[0] == '+') return followed_by_space(1);
  if (line.starts_with("\xE2\x80\xA2")) return line.size() == 3 || followed_by_space(3);
  std::size_t k = 0;
  while (k < line.size() && std::isdigit(static_cast<unsigned char>(line[k]))) ++k;
  if (k > 0 && k < line.size() && (line[k] == '.' || line[k] == ')')) return followed_by_space(k + 1);
  return false;
}

inline bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

}  // namespace detail

// Lowercase, split on anything outside [a-z0-9._-], strip leading/trailing
// '.', '_' and '-'. No stopword filtering.
inline std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    std::size_t b = 0, e = cur.size();
    auto strip = [](char c) { return c == '.' || c == '_' || c == '-'; };
    while (b < e && strip(cur[b])) ++b;
    while (e > b && strip(cur[e - 1])) --e;
    if (e > b) out.emplace_back(cur.substr(b, e - b));
    cur.clear();
  };
  for (char ch : s) {
    auto c = static_cast<unsigned char>(std::tolower(static_cast<unsigned char>(ch)));
    if (detail::is_token_char(c))
      cur.push_back(static_cast<char>(c));
    else
      flush();
  }
  flush();
  return out;
}

inline std::vector<std::string> tokenize(std::string_view s) {
  auto ws = words(s);
  std::erase_if(ws, [](const std::string& w) { return is_stopword(w); });
  return ws;
}

// Splits on '.', '!' or '?' (optionally followed by closing quotes or
// brackets) when followed by whitespace and then an uppercase letter or the
// end of the text. Blank lines and bulleted or numbered lines start a new
// sentence; other newlines are treated as spaces.
inline std::vector<Sentence> segment_sentences(std::string_view input) {
  // Group lines into blocks.
  std::vector<std::string> blocks;
  std::string current;
  auto close_block = [&] {
    auto t = detail::trim(current);
    if (!t.empty()) blocks.emplace_back(t);
    current.clear();
  };
  std::size_t pos = 0;
  while (pos <= input.size()) {
    auto nl = input.find('\n', pos);
    auto line = input.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    if (detail::trim(line).empty()) {
      close_block();
    } else {
      if (detail::starts_with_bullet(line)) close_block();
      if (!current.empty()) current.push_back(' ');
      current.append(detail::trim(line));
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  close_block();

  std::vector<Sentence> out;
  auto emit = [&](std::string_view piece) {
    auto t = detail::trim(piece);
    if (t.empty()) return;
    Sentence s;
    s.index = out.size();
    s.text = std::string(t);
    s.words = words(s.text);
    s.tokens = s.words;
    std::erase_if(s.tokens, [](const std::string& w) { return is_stopword(w); });
    out.push_back(std::move(s));
  };

  for (const auto& block : blocks) {
    std::string_view b = block;
    std::size_t start = 0;
    for (std::size_t k = 0; k < b.size(); ++k) {
      char c = b[k];
      if (c != '.' && c != '!' && c != '?') continue;
      std::size_t after = k + 1;
      while (after < b.size() && detail::is_closer(b[after])) ++after;
      if (after == b.size()) continue;  // end of block: emitted below
      if (!detail::is_space(static_cast<unsigned char>(b[after]))) continue;
      std::size_t next = after;
      while (next < b.size() && detail::is_space(static_cast<unsigned char>(b[next]))) ++next;
      if (next == b.size() || std::isupper(static_cast<unsigned char>(b[next]))) {
        emit(b.substr(start, after - start));
        start = after;
        k = after - 1;
      }
    }
    emit(b.substr(start));
  }
  return out;
}

}  // namespace text
}  // namespace ttpchain
