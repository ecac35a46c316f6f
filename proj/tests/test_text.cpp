#include <gtest/gtest.h>

#include <random>
#include <string>

#include "ttpchain/discourse.hpp"
#include "ttpchain/markers.hpp"
#include "ttpchain/text.hpp"

using namespace ttpchain;

namespace {

std::vector<std::string> texts(const std::vector<Sentence>& ss) {
  std::vector<std::string> out;
  for (const auto& s : ss) out.push_back(s.text);
  return out;
}

std::string non_space(std::string_view s) {
  std::string out;
  for (char c : s)
    if (!text::detail::is_space(static_cast<unsigned char>(c))) out += c;
  return out;
}

}  // namespace

TEST(Segmentation, KeepsFilenameInsideSentence) {
  auto ss = text::segment_sentences(
      "Once executed, the macro created a VBS script (Updater.vbs). A scheduled task was then created.");
  ASSERT_EQ(ss.size(), 2u);
  EXPECT_NE(ss[0].text.find("Updater.vbs"), std::string::npos);
  EXPECT_EQ(ss[1].text, "A scheduled task was then created.");
  EXPECT_EQ(ss[0].index, 0u);
  EXPECT_EQ(ss[1].index, 1u);
}

TEST(Segmentation, EmptyTextGivesNoSentences) {
  EXPECT_TRUE(text::segment_sentences("").empty());
  EXPECT_TRUE(text::segment_sentences("   \n\n\t").empty());
}

TEST(Segmentation, NoSplitInsideExecutableName) {
  auto ss = text::segment_sentences("Attackers used cmd.exe to run whoami");
  ASSERT_EQ(ss.size(), 1u);
  EXPECT_EQ(ss[0].text, "Attackers used cmd.exe to run whoami");
}

TEST(Segmentation, VersionNumbersAndLowercaseContinuations) {
  auto ss = text::segment_sentences("Version 3.5 was used. it was not updated! Was it patched? Yes.");
  EXPECT_EQ(texts(ss), (std::vector<std::string>{"Version 3.5 was used. it was not updated!", "Was it patched?", "Yes."}));
}

TEST(Segmentation, ListItemsAreBoundaries) {
  auto ss = text::segment_sentences("The toolkit includes:\n- a keylogger\n- a screen grabber\n1. a loader");
  ASSERT_EQ(ss.size(), 4u);
  EXPECT_EQ(ss[1].text, "- a keylogger");
  EXPECT_EQ(ss[3].text, "1. a loader");
}

TEST(Segmentation, ClosingQuoteStaysWithSentence) {
  auto ss = text::segment_sentences("The note said \"pay now.\" Then files were encrypted.");
  ASSERT_EQ(ss.size(), 2u);
  EXPECT_EQ(ss[0].text, "The note said \"pay now.\"");
}

TEST(Segmentation, IndicesAreContiguousAndSentencesNonEmpty) {
  auto ss = text::segment_sentences("A b. C d.\n\nE f? G h!\n* i j");
  for (std::size_t k = 0; k < ss.size(); ++k) {
    EXPECT_EQ(ss[k].index, k);
    EXPECT_FALSE(text::detail::trim(ss[k].text).empty());
  }
}

TEST(Segmentation, ConcatenationPreservesNonWhitespace) {
  std::mt19937_64 rng(11);
  const std::string alphabet = "abcXYZ .!?\n-*\"'()0123456789.";
  for (int trial = 0; trial < 300; ++trial) {
    std::string s;
    std::size_t len = rng() % 120;
    for (std::size_t k = 0; k < len; ++k) s += alphabet[rng() % alphabet.size()];
    std::string joined;
    for (const auto& sent : text::segment_sentences(s)) joined += sent.text + " ";
    EXPECT_EQ(non_space(joined), non_space(s)) << "input: " << s;
  }
}

TEST(Tokenize, DropsStopwordsAndKeepsFilenames) {
  EXPECT_EQ(text::tokenize("The macro created Updater.vbs"),
            (std::vector<std::string>{"macro", "created", "updater.vbs"}));
  EXPECT_TRUE(text::tokenize("").empty());
  EXPECT_EQ(text::tokenize("rundll32.exe, then PowerShell!"),
            (std::vector<std::string>{"rundll32.exe", "then", "powershell"}));
}

TEST(Tokenize, StripsEdgePunctuationOnly) {
  EXPECT_EQ(text::tokenize("--payload_x.. _init_ a-b.c"), (std::vector<std::string>{"payload_x", "init", "a-b.c"}));
}

TEST(Tokenize, TokensContainNoWhitespace) {
  for (const auto& t : text::tokenize("Tab\tseparated\nand  spaced words"))
    for (char c : t) EXPECT_FALSE(text::detail::is_space(static_cast<unsigned char>(c)));
}

TEST(Tokenize, IdempotentOnItsOwnOutput) {
  std::mt19937_64 rng(5);
  const std::string alphabet = "aBc.-_ 9Zq,;!tHe";
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    std::size_t len = rng() % 60;
    for (std::size_t k = 0; k < len; ++k) s += alphabet[rng() % alphabet.size()];
    auto once = text::tokenize(s);
    std::string joined;
    for (const auto& t : once) joined += t + " ";
    EXPECT_EQ(text::tokenize(joined), once) << "input: " << s;
  }
}

TEST(Stopwords, SizeAndNoMarkerOrCueWords) {
  const auto& sw = text::stopwords();
  EXPECT_GE(sw.size(), 110u);
  EXPECT_LE(sw.size(), 130u);
  const auto& lex = MarkerLexicon::standard();
  for (const auto* set : {&lex.before_markers, &lex.overlap_markers, &lex.concurrent_markers})
    for (const auto& m : *set) EXPECT_FALSE(text::is_stopword(m)) << m;
  for (auto w : {"if", "otherwise", "unless", "else", "this", "these", "that", "those"})
    EXPECT_FALSE(text::is_stopword(w)) << w;
  EXPECT_TRUE(text::is_stopword("the"));
}
