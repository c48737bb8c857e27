// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "phraseforge/corpus.hpp"
#include "phraseforge/errors.hpp"
#include "test_util.hpp"

using namespace phraseforge;

namespace {

Corpus corpus_from(const std::string& jsonl) {
  std::istringstream in(jsonl);
  return parse_corpus(in);
}

std::vector<Conversation> convs_from(const std::string& jsonl) {
  std::istringstream in(jsonl);
  return parse_conversations(in);
}

std::string turn_line(const std::string& cid, int idx, const std::string& q, const std::string& a) {
  return R"({"conversation_id":")" + cid + R"(","turn_index":)" + std::to_string(idx) +
         R"(,"question":")" + q + R"(","gold_answer":")" + a + "\"}\n";
}

}  // namespace

TEST(Corpus, LoadsRecordsInOrder) {
  const auto c = corpus_from(R"({"passage_id":"p1","title":"A","text":"x y"})"
                             "\n"
                             R"({"passage_id":"p2","title":"B","text":"z"})"
                             "\n");
  ASSERT_EQ(c.size(), 2U);
  EXPECT_EQ(c.passages()[0].passage_id, "p1");
  EXPECT_EQ(c.passages()[1].passage_id, "p2");
  EXPECT_EQ(c.at("p2").title, "B");
  EXPECT_EQ(c.find("p3"), nullptr);
}

TEST(Corpus, DuplicateIdIsRejectedWithTheId) {
  try {
    corpus_from(R"({"passage_id":"dup","title":"","text":"a"})"
                "\n"
                R"({"passage_id":"dup","title":"","text":"b"})");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("dup"), std::string::npos);
  }
}

TEST(Corpus, TokenOffsetsOnLiteralString) {
  const auto c = corpus_from(R"({"passage_id":"p1","title":"T","text":"a b c"})");
  const auto& toks = c.at("p1").tokens;
  ASSERT_EQ(toks.size(), 3U);
  EXPECT_EQ(toks[0], (Token{"a", 0, 1}));
  EXPECT_EQ(toks[1], (Token{"b", 2, 3}));
  EXPECT_EQ(toks[2], (Token{"c", 4, 5}));
}

TEST(Corpus, MalformedRecordsReportTheLine) {
  try {
    corpus_from(R"({"passage_id":"p1","title":"T","text":"a"})"
                "\n"
                R"({"passage_id":"p2","title":"T"})");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2U);
  }
  EXPECT_THROW(corpus_from("not json"), ParseError);
  EXPECT_THROW(corpus_from(R"({"passage_id":1,"title":"T","text":"a"})"), ParseError);
}

TEST(Corpus, FingerprintTracksContent) {
  const auto a = corpus_from(R"({"passage_id":"p1","title":"T","text":"a b"})");
  const auto b = corpus_from(R"({"passage_id":"p1","title":"T","text":"a b"})");
  const auto c = corpus_from(R"({"passage_id":"p1","title":"T","text":"a c"})");
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_NE(a.fingerprint(), c.fingerprint());
}

TEST(Corpus, MissingFileIsNotFound) {
  EXPECT_THROW(load_corpus("/nonexistent/corpus.jsonl"), NotFoundError);
}

TEST(Conversations, ThreeTurnsKeepTheirIndices) {
  const auto convs = convs_from(turn_line("c", 1, "q1", "a1") + turn_line("c", 2, "q2", "a2") +
                                turn_line("c", 3, "q3", "a3"));
  ASSERT_EQ(convs.size(), 1U);
  ASSERT_EQ(convs[0].turns.size(), 3U);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(convs[0].turns[static_cast<std::size_t>(i)].turn_index, i + 1);
}

TEST(Conversations, GapIsReported) {
  try {
    convs_from(turn_line("c", 1, "q1", "a1") + turn_line("c", 3, "q3", "a3"));
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("gap at turn 2"), std::string::npos);
  }
}

TEST(Conversations, InterleavedFileMatchesStableSortOracle) {
  std::vector<std::tuple<std::string, int>> raw = {{"b", 2}, {"a", 1}, {"b", 1}, {"a", 3},
                                                   {"a", 2}, {"c", 1}, {"b", 3}};
  std::string text;
  for (const auto& [cid, idx] : raw) text += turn_line(cid, idx, "q", "x");
  const auto convs = convs_from(text);

  // Oracle: first-appearance order of ids, then a stable sort on turn index.
  std::vector<std::string> order;
  for (const auto& [cid, idx] : raw) {
    if (std::find(order.begin(), order.end(), cid) == order.end()) order.push_back(cid);
  }
  auto sorted = raw;
  std::stable_sort(sorted.begin(), sorted.end(), [&](const auto& x, const auto& y) {
    const auto px = std::find(order.begin(), order.end(), std::get<0>(x)) - order.begin();
    const auto py = std::find(order.begin(), order.end(), std::get<0>(y)) - order.begin();
    return px != py ? px < py : std::get<1>(x) < std::get<1>(y);
  });
  const auto flat = flatten(convs);
  ASSERT_EQ(flat.size(), sorted.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    EXPECT_EQ(flat[i].conversation_id, std::get<0>(sorted[i]));
    EXPECT_EQ(flat[i].turn_index, std::get<1>(sorted[i]));
  }
  ASSERT_EQ(convs.size(), 3U);
  EXPECT_EQ(convs[0].conversation_id, "b");
}

TEST(Conversations, DuplicateTurnAndBadIndex) {
  EXPECT_THROW(convs_from(turn_line("c", 1, "q", "a") + turn_line("c", 1, "q", "a")),
               ValidationError);
  EXPECT_THROW(convs_from(turn_line("c", 0, "q", "a")), ParseError);
}

TEST(Conversations, OptionalGoldPassage) {
  const auto convs = convs_from(
      R"({"conversation_id":"c","turn_index":1,"question":"q","gold_answer":"a","gold_passage_id":"p9"})");
  ASSERT_TRUE(convs[0].turns[0].gold_passage_id.has_value());
  EXPECT_EQ(*convs[0].turns[0].gold_passage_id, "p9");
  const auto none = convs_from(turn_line("c", 1, "q", "a"));
  EXPECT_FALSE(none[0].turns[0].gold_passage_id.has_value());
}

TEST(Spans, ThreeTokensMaxTwo) {
  const auto p = make_passage("p", "", "x y z");
  const auto spans = enumerate_phrase_spans(p, 2);
  const std::vector<std::pair<std::size_t, std::size_t>> want = {{0, 0}, {0, 1}, {1, 1}, {1, 2}, {2, 2}};
  ASSERT_EQ(spans.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(spans[i].start_token, want[i].first);
    EXPECT_EQ(spans[i].end_token, want[i].second);
  }
  EXPECT_EQ(spans[1].surface, "x y");
}

TEST(Spans, CountsMatchFormulaAndExhaustiveOracle) {
  EXPECT_EQ(enumerate_phrase_spans(make_passage("p", "", "a b c d e"), 1).size(), 5U);
  EXPECT_EQ(enumerate_phrase_spans(make_passage("p", "", "a b c d"), 10).size(), 4U * 5U / 2U);
  EXPECT_TRUE(enumerate_phrase_spans(make_passage("p", "", ""), 3).empty());
  EXPECT_THROW(enumerate_phrase_spans(make_passage("p", "", "a"), 0), ConfigError);
  for (std::size_t n = 0; n < 30; ++n) {
    for (std::size_t m = 1; m < 25; ++m) {
      std::size_t brute = 0;
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t e = s; e < n; ++e) brute += (e - s + 1 <= m) ? 1 : 0;
      }
      ASSERT_EQ(phrase_span_count(n, m), brute) << n << " " << m;
    }
  }
}

TEST(Spans, SurfaceIsTheByteSlice) {
  const auto p = make_passage("p", "", "  alpha\tbeta  gamma ");
  for (const auto& s : enumerate_phrase_spans(p, 20)) {
    const auto b = p.tokens[s.start_token].begin;
    const auto e = p.tokens[s.end_token].end;
    EXPECT_EQ(s.surface, p.text.substr(b, e - b));
    EXPECT_LE(s.start_token, s.end_token);
  }
}

TEST(Spans, FindAnswerExactThenNormalized) {
  const auto p = make_passage("p", "", "The founder was Pell Marrow , long ago .");
  auto exact = find_answer_span(p, "Pell Marrow");
  ASSERT_TRUE(exact);
  EXPECT_EQ(exact->start_token, 3U);
  EXPECT_EQ(exact->end_token, 4U);
  auto loose = find_answer_span(p, "pell marrow");
  ASSERT_TRUE(loose);
  EXPECT_EQ(loose->surface, "Pell Marrow");
  EXPECT_FALSE(find_answer_span(p, "nobody"));
  EXPECT_FALSE(find_answer_span(p, ""));
}

TEST(Context, FirstTurnHasOnlyTheQuestion) {
  const auto convs = convs_from(turn_line("c", 1, "who is it", "x"));
  const auto ctx = build_conv_context(convs[0], 1);
  EXPECT_EQ(ctx.serialized_text, "who is it");
  EXPECT_EQ(ctx.history_pairs, 0U);
}

TEST(Context, NewestFirstOrdering) {
  const auto convs = convs_from(turn_line("c", 1, "q1", "a1") + turn_line("c", 2, "q2", "a2") +
                                turn_line("c", 3, "q3", "a3"));
  const auto ctx = build_conv_context(convs[0], 3);
  EXPECT_EQ(ctx.serialized_text, "q3 [SEP] q2 [SEP] a2 [SEP] q1 [SEP] a1");
  EXPECT_EQ(ctx.history_pairs, 2U);
  EXPECT_EQ(ctx.id(), "c#3");
}

TEST(Context, BudgetDropsOldestPairs) {
  const auto convs = convs_from(turn_line("c", 1, "q one", "a one") +
                                turn_line("c", 2, "q two", "a two") +
                                turn_line("c", 3, "q three", "a three"));
  // q3 (2 tokens) + separators (2) + q2 (2) + a2 (2) = 8 fits; the q1/a1 pair does not.
  const auto ctx = build_conv_context(convs[0], 3, 8);
  EXPECT_EQ(ctx.serialized_text, "q three [SEP] q two [SEP] a two");
  EXPECT_EQ(ctx.history_pairs, 1U);
  EXPECT_EQ(build_conv_context(convs[0], 3, 7).serialized_text, "q three");
}

TEST(Context, AnswerOverrideReplacesHistory) {
  const auto convs = convs_from(turn_line("c", 1, "q1", "a1") + turn_line("c", 2, "q2", "a2"));
  const std::vector<std::string> predicted = {"guess"};
  EXPECT_EQ(build_conv_context(convs[0], 2, kUnlimitedBudget, predicted).serialized_text,
            "q2 [SEP] q1 [SEP] guess");
  EXPECT_THROW(build_conv_context(convs[0], 3), NotFoundError);
}
