// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phraseforge/baselines.hpp"
#include "phraseforge/corpus.hpp"
#include "phraseforge/encoder.hpp"
#include "phraseforge/eval.hpp"
#include "phraseforge/phrase_index.hpp"

namespace phraseforge {

/// Single-stage answering: encode the context, search the phrase index.
class SingleStageEngine {
 public:
  SingleStageEngine(const PhraseIndex& index, const ProjectionHead& head,
                    EncoderProvider& provider, std::size_t k = kDefaultSearchK)
      : index_(index), head_(head), provider_(provider), k_(k) {}

  std::vector<RankedPhrase> answer(const ConvContext& ctx) const;

 private:
  const PhraseIndex& index_;
  const ProjectionHead& head_;
  EncoderProvider& provider_;
  std::size_t k_;
};

enum class HistoryMode {
  kGold,       // prior turns carry the dataset's gold answers
  kPredicted,  // prior turns carry the system's own earlier answers
};

struct TurnAnswer {
  std::string prediction;
  std::vector<std::string> ranked_passages;
  std::optional<std::string> source_passage_id;
  double score = 0.0;
};

struct TurnPrediction {
  std::string conversation_id;
  int turn_index = 0;
  std::string context;
  std::string gold_answer;
  std::optional<std::string> gold_passage_id;
  TurnAnswer answer;
};

using Answerer = std::function<TurnAnswer(const ConvContext&)>;

/// Answers every turn of every conversation in order, feeding gold or
/// predicted answers into later contexts.
std::vector<TurnPrediction> run_conversations(std::span<const Conversation> conversations,
                                              const Answerer& answerer, HistoryMode mode,
                                              std::size_t token_budget = kUnlimitedBudget);

Answerer single_stage_answerer(const SingleStageEngine& engine, std::size_t cutoff = kDefaultCutoff);
Answerer pipeline_answerer(const Pipeline& pipeline);

std::vector<AnswerRecord> to_records(std::span<const TurnPrediction> predictions);

}  // namespace phraseforge
