// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "phraseforge/engine.hpp"

namespace phraseforge {

std::vector<RankedPhrase> SingleStageEngine::answer(const ConvContext& ctx) const {
  return search_topk(index_, encode_context(ctx, head_, provider_), k_);
}

std::vector<TurnPrediction> run_conversations(std::span<const Conversation> conversations,
                                              const Answerer& answerer, HistoryMode mode,
                                              std::size_t token_budget) {
  std::vector<TurnPrediction> out;
  for (const auto& conv : conversations) {
    std::vector<std::string> predicted;
    for (const auto& turn : conv.turns) {
      const auto ctx =
          mode == HistoryMode::kPredicted
              ? build_conv_context(conv, turn.turn_index, token_budget, predicted)
              : build_conv_context(conv, turn.turn_index, token_budget);
      TurnPrediction p;
      p.conversation_id = conv.conversation_id;
      p.turn_index = turn.turn_index;
      p.context = ctx.serialized_text;
      p.gold_answer = turn.gold_answer;
      p.gold_passage_id = turn.gold_passage_id;
      p.answer = answerer(ctx);
      predicted.push_back(p.answer.prediction);
      out.push_back(std::move(p));
    }
  }
  return out;
}

Answerer single_stage_answerer(const SingleStageEngine& engine, std::size_t cutoff) {
  return [&engine, cutoff](const ConvContext& ctx) {
    const auto ranked = engine.answer(ctx);
    TurnAnswer a;
    if (!ranked.empty()) {
      a.prediction = ranked.front().span.surface;
      a.source_passage_id = ranked.front().span.passage_id;
      a.score = ranked.front().score;
    }
    a.ranked_passages = passages_from_phrases(ranked, cutoff);
    return a;
  };
}

Answerer pipeline_answerer(const Pipeline& pipeline) {
  return [&pipeline](const ConvContext& ctx) {
    const auto r = pipeline.answer(ctx);
    TurnAnswer a;
    a.prediction = r.answer.answer;
    if (!r.answer.source_passage_id.empty()) a.source_passage_id = r.answer.source_passage_id;
    a.score = r.answer.score;
    for (const auto& p : r.retrieved) a.ranked_passages.push_back(p.passage_id);
    return a;
  };
}

std::vector<AnswerRecord> to_records(std::span<const TurnPrediction> predictions) {
  std::vector<AnswerRecord> out;
  out.reserve(predictions.size());
  for (const auto& p : predictions) {
    out.push_back(AnswerRecord{p.answer.prediction, p.gold_answer, p.answer.ranked_passages,
                               p.gold_passage_id});
  }
  return out;
}

}  // namespace phraseforge
