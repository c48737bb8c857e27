// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace phraseforge {

inline constexpr std::size_t kDefaultMaxPhraseLen = 20;
inline constexpr std::string_view kSep = " [SEP] ";

/// A whitespace token and its byte range [begin, end) in the owning text.
struct Token {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const Token&) const = default;
};

std::vector<Token> tokenize_whitespace(std::string_view text);

struct Passage {
  std::string passage_id;
  std::string title;
  std::string text;
  std::vector<Token> tokens;
};

/// Builds a passage and its token table from raw fields.
Passage make_passage(std::string passage_id, std::string title, std::string text);

/// Ordered, id-unique passage collection. Immutable once constructed.
class Corpus {
 public:
  Corpus() = default;
  /// Throws ValidationError on a duplicate passage id.
  explicit Corpus(std::vector<Passage> passages);

  std::span<const Passage> passages() const { return passages_; }
  std::size_t size() const { return passages_.size(); }
  bool empty() const { return passages_.empty(); }

  const Passage* find(std::string_view passage_id) const;
  /// Throws NotFoundError.
  const Passage& at(std::string_view passage_id) const;

  /// Content hash over (id, title, text) of every passage in order.
  std::uint64_t fingerprint() const { return fingerprint_; }

 private:
  std::vector<Passage> passages_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::uint64_t fingerprint_ = 0;
};

Corpus parse_corpus(std::istream& in);
Corpus load_corpus(const std::filesystem::path& path);

struct ConversationTurn {
  std::string conversation_id;
  int turn_index = 1;
  std::string question;
  std::string gold_answer;
  std::optional<std::string> gold_passage_id;
};

/// Turns of one conversation, ordered by turn_index starting at 1.
struct Conversation {
  std::string conversation_id;
  std::vector<ConversationTurn> turns;
};

/// Groups turns by conversation (in order of first appearance) and sorts each
/// group by turn index. Throws ValidationError on gaps or duplicate indices.
std::vector<Conversation> group_conversations(std::vector<ConversationTurn> turns);

std::vector<Conversation> parse_conversations(std::istream& in);
std::vector<Conversation> load_conversations(const std::filesystem::path& path);

/// Flattens grouped conversations back into turn order.
std::vector<ConversationTurn> flatten(std::span<const Conversation> conversations);

struct PhraseSpan {
  std::string passage_id;
  std::size_t start_token = 0;
  std::size_t end_token = 0;  // inclusive
  std::string surface;

  std::size_t length() const { return end_token - start_token + 1; }
  bool operator==(const PhraseSpan&) const = default;
};

/// Byte slice of the passage text covered by tokens [start, end].
std::string span_surface(const Passage& passage, std::size_t start_token, std::size_t end_token);

/// All spans of at most max_phrase_len tokens, ordered by (start, end).
std::vector<PhraseSpan> enumerate_phrase_spans(const Passage& passage, std::size_t max_phrase_len);

/// Number of spans enumerate_phrase_spans yields for n tokens.
std::size_t phrase_span_count(std::size_t n_tokens, std::size_t max_phrase_len);

/// Earliest span whose tokens equal the answer's tokens. Falls back to a
/// match on normalized tokens when no exact match exists.
std::optional<PhraseSpan> find_answer_span(const Passage& passage, std::string_view answer);

struct ConvContext {
  std::string conversation_id;
  int turn_index = 1;
  std::string serialized_text;
  std::size_t token_budget = 0;
  /// Number of prior (question, answer) pairs kept after truncation.
  std::size_t history_pairs = 0;

  std::string id() const { return conversation_id + "#" + std::to_string(turn_index); }
};

inline constexpr std::size_t kUnlimitedBudget = static_cast<std::size_t>(-1);

/// Serializes q_i [SEP] q_{i-1} [SEP] a_{i-1} ... q_1 [SEP] a_1, dropping the
/// oldest pairs whole until the whitespace token count fits token_budget.
/// The current question is always kept, even if it alone exceeds the budget.
///
/// answer_override, when non-empty, supplies the answer for turn j at index
/// j-1 in place of the gold answer (predicted-history evaluation).
ConvContext build_conv_context(const Conversation& conversation, int turn_index,
                               std::size_t token_budget = kUnlimitedBudget,
                               std::span<const std::string> answer_override = {});

}  // namespace phraseforge
