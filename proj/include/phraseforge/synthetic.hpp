// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "phraseforge/corpus.hpp"

namespace phraseforge::synthetic {

struct Options {
  std::uint64_t seed = 7;
  int topics = 20;
  int passages_per_topic = 10;
  int facts_per_passage = 6;
  int turns_per_conversation = 3;
};

/// A generated benchmark. Each passage describes one entity with planted
/// two-token answers framed by attribute-specific wording. Questions name the
/// entity through aliases, and later turns refer back with a pronoun.
///
/// `conversations` is the benchmark proper (one conversation per four
/// passages). `transfer` holds one further conversation per passage over
/// different facts, used for the topic-transfer experiment.
struct Benchmark {
  std::vector<Passage> passages;
  std::vector<ConversationTurn> conversations;
  std::vector<ConversationTurn> transfer;
};

Benchmark generate(const Options& options = {});

/// Topic number encoded in a generated conversation or passage id, if any.
std::optional<int> topic_of(std::string_view id);

/// Keeps conversations whose topic lies in [first, last].
std::vector<Conversation> filter_topics(const std::vector<Conversation>& conversations, int first,
                                        int last);

/// Writes corpus.jsonl, conversations.jsonl and transfer.jsonl into dir.
void write_benchmark(const Benchmark& benchmark, const std::filesystem::path& dir);

}  // namespace phraseforge::synthetic
