// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "phraseforge/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "json.hpp"
#include "phraseforge/errors.hpp"
#include "phraseforge/eval.hpp"
#include "phraseforge/hash.hpp"

namespace phraseforge {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string required_string(const nlohmann::json& record, const char* key, std::size_t line) {
  auto it = record.find(key);
  if (it == record.end() || it->is_null()) {
    throw ParseError(std::string("missing field '") + key + "'", line);
  }
  if (!it->is_string()) {
    throw ParseError(std::string("field '") + key + "' must be a string", line);
  }
  return it->get<std::string>();
}

bool blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), is_space);
}

std::ifstream open_or_throw(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError(std::string(what) + " not found: " + path.string());
  return in;
}

}  // namespace

std::vector<Token> tokenize_whitespace(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i == text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    tokens.push_back(Token{std::string(text.substr(i, j - i)), i, j});
    i = j;
  }
  return tokens;
}

Passage make_passage(std::string passage_id, std::string title, std::string text) {
  Passage p{std::move(passage_id), std::move(title), std::move(text), {}};
  p.tokens = tokenize_whitespace(p.text);
  return p;
}

Corpus::Corpus(std::vector<Passage> passages) : passages_(std::move(passages)) {
  std::uint64_t h = kFnvOffset;
  for (std::size_t i = 0; i < passages_.size(); ++i) {
    const auto& p = passages_[i];
    if (!by_id_.emplace(p.passage_id, i).second) {
      throw ValidationError("duplicate passage_id: " + p.passage_id);
    }
    for (std::string_view field : {std::string_view(p.passage_id), std::string_view(p.title),
                                   std::string_view(p.text)}) {
      h = fnv1a64_u64(field.size(), h);
      h = fnv1a64(field, h);
    }
  }
  fingerprint_ = h;
}

const Passage* Corpus::find(std::string_view passage_id) const {
  auto it = by_id_.find(std::string(passage_id));
  return it == by_id_.end() ? nullptr : &passages_[it->second];
}

const Passage& Corpus::at(std::string_view passage_id) const {
  const Passage* p = find(passage_id);
  if (p == nullptr) throw NotFoundError("unknown passage_id: " + std::string(passage_id));
  return *p;
}

Corpus parse_corpus(std::istream& in) {
  std::vector<Passage> passages;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!record.is_object()) throw ParseError("record is not an object", line_no);
    passages.push_back(make_passage(required_string(record, "passage_id", line_no),
                                    required_string(record, "title", line_no),
                                    required_string(record, "text", line_no)));
  }
  return Corpus(std::move(passages));
}

Corpus load_corpus(const std::filesystem::path& path) {
  auto in = open_or_throw(path, "corpus");
  return parse_corpus(in);
}

std::vector<Conversation> group_conversations(std::vector<ConversationTurn> turns) {
  std::vector<Conversation> groups;
  std::map<std::string, std::size_t> slot;
  for (auto& t : turns) {
    auto [it, inserted] = slot.emplace(t.conversation_id, groups.size());
    if (inserted) groups.push_back(Conversation{t.conversation_id, {}});
    groups[it->second].turns.push_back(std::move(t));
  }
  for (auto& g : groups) {
    std::stable_sort(g.turns.begin(), g.turns.end(),
                     [](const auto& a, const auto& b) { return a.turn_index < b.turn_index; });
    for (std::size_t i = 0; i < g.turns.size(); ++i) {
      const int expected = static_cast<int>(i) + 1;
      if (g.turns[i].turn_index != expected) {
        if (g.turns[i].turn_index < expected) {
          throw ValidationError("conversation " + g.conversation_id + ": duplicate turn " +
                                std::to_string(g.turns[i].turn_index));
        }
        throw ValidationError("conversation " + g.conversation_id + ": gap at turn " +
                              std::to_string(expected));
      }
    }
  }
  return groups;
}

std::vector<Conversation> parse_conversations(std::istream& in) {
  std::vector<ConversationTurn> turns;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!record.is_object()) throw ParseError("record is not an object", line_no);
    ConversationTurn t;
    t.conversation_id = required_string(record, "conversation_id", line_no);
    auto idx = record.find("turn_index");
    if (idx == record.end() || !idx->is_number_integer()) {
      throw ParseError("field 'turn_index' must be an integer", line_no);
    }
    t.turn_index = idx->get<int>();
    if (t.turn_index < 1) throw ParseError("turn_index must be >= 1", line_no);
    t.question = required_string(record, "question", line_no);
    t.gold_answer = required_string(record, "gold_answer", line_no);
    if (auto gp = record.find("gold_passage_id"); gp != record.end() && !gp->is_null()) {
      if (!gp->is_string()) throw ParseError("field 'gold_passage_id' must be a string", line_no);
      t.gold_passage_id = gp->get<std::string>();
    }
    turns.push_back(std::move(t));
  }
  return group_conversations(std::move(turns));
}

std::vector<Conversation> load_conversations(const std::filesystem::path& path) {
  auto in = open_or_throw(path, "conversations");
  return parse_conversations(in);
}

std::vector<ConversationTurn> flatten(std::span<const Conversation> conversations) {
  std::vector<ConversationTurn> out;
  for (const auto& c : conversations) out.insert(out.end(), c.turns.begin(), c.turns.end());
  return out;
}

std::string span_surface(const Passage& passage, std::size_t start_token, std::size_t end_token) {
  const auto begin = passage.tokens.at(start_token).begin;
  const auto end = passage.tokens.at(end_token).end;
  return passage.text.substr(begin, end - begin);
}

std::size_t phrase_span_count(std::size_t n_tokens, std::size_t max_phrase_len) {
  std::size_t total = 0;
  for (std::size_t s = 0; s < n_tokens; ++s) total += std::min(max_phrase_len, n_tokens - s);
  return total;
}

std::vector<PhraseSpan> enumerate_phrase_spans(const Passage& passage, std::size_t max_phrase_len) {
  if (max_phrase_len < 1) throw ConfigError("max_phrase_len must be >= 1");
  const std::size_t n = passage.tokens.size();
  std::vector<PhraseSpan> spans;
  spans.reserve(phrase_span_count(n, max_phrase_len));
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t last = std::min(n, s + max_phrase_len) - 1;
    for (std::size_t e = s; e <= last; ++e) {
      spans.push_back(PhraseSpan{passage.passage_id, s, e, span_surface(passage, s, e)});
    }
  }
  return spans;
}

std::optional<PhraseSpan> find_answer_span(const Passage& passage, std::string_view answer) {
  const auto want = tokenize_whitespace(answer);
  if (want.empty()) return std::nullopt;
  const auto& toks = passage.tokens;
  auto search = [&](auto&& equal) -> std::optional<PhraseSpan> {
    if (toks.size() < want.size()) return std::nullopt;
    for (std::size_t s = 0; s + want.size() <= toks.size(); ++s) {
      bool match = true;
      for (std::size_t k = 0; k < want.size() && match; ++k) match = equal(toks[s + k], want[k]);
      if (match) {
        const auto e = s + want.size() - 1;
        return PhraseSpan{passage.passage_id, s, e, span_surface(passage, s, e)};
      }
    }
    return std::nullopt;
  };
  if (auto exact = search([](const Token& a, const Token& b) { return a.text == b.text; })) {
    return exact;
  }
  return search([](const Token& a, const Token& b) {
    return normalize_answer(a.text) == normalize_answer(b.text);
  });
}

ConvContext build_conv_context(const Conversation& conversation, int turn_index,
                               std::size_t token_budget,
                               std::span<const std::string> answer_override) {
  const auto& turns = conversation.turns;
  if (turn_index < 1 || static_cast<std::size_t>(turn_index) > turns.size()) {
    throw NotFoundError("conversation " + conversation.conversation_id + " has no turn " +
                        std::to_string(turn_index));
  }
  const auto current = static_cast<std::size_t>(turn_index - 1);
  auto answer_of = [&](std::size_t j) -> const std::string& {
    return j < answer_override.size() ? answer_override[j] : turns[j].gold_answer;
  };

  // Token cost of each history pair (most recent first): two separators plus
  // the question and answer tokens.
  std::size_t used = tokenize_whitespace(turns[current].question).size();
  std::size_t kept = 0;
  for (std::size_t back = 1; back <= current; ++back) {
    const std::size_t j = current - back;
    const std::size_t cost =
        2 + tokenize_whitespace(turns[j].question).size() + tokenize_whitespace(answer_of(j)).size();
    if (token_budget != kUnlimitedBudget && used + cost > token_budget) break;
    used += cost;
    ++kept;
  }

  std::string text = turns[current].question;
  for (std::size_t back = 1; back <= kept; ++back) {
    const std::size_t j = current - back;
    text += kSep;
    text += turns[j].question;
    text += kSep;
    text += answer_of(j);
  }
  return ConvContext{conversation.conversation_id, turn_index, std::move(text), token_budget, kept};
}

}  // namespace phraseforge
