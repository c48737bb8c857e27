// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "phraseforge/corpus.hpp"
#include "phraseforge/encoder.hpp"
#include "phraseforge/errors.hpp"
#include "phraseforge/phrase_index.hpp"

namespace phraseforge {

struct TrainingExample {
  ConvContext ctx;
  PhraseSpan positive;
  std::optional<ConvContext> prev_ctx;  // present iff turn_index > 1
  std::string gold_answer;
};

struct ExampleSet {
  std::vector<TrainingExample> examples;
  /// Turns dropped because the gold answer does not occur in the gold passage
  /// (or no gold passage is given).
  std::vector<std::string> skipped;
};

/// One example per turn, using gold answers for the history. The positive
/// span is the earliest occurrence of the gold answer in the gold passage.
ExampleSet make_training_examples(std::span<const Conversation> conversations,
                                  const Corpus& corpus,
                                  std::size_t token_budget = kUnlimitedBudget);

/// Frozen base features of a training example.
struct EncodedExample {
  std::string id;
  std::string conversation_id;
  BaseEmbedding ctx;
  BaseEmbedding phrase;
  std::optional<BaseEmbedding> prev;
  PhraseSpan positive;
  std::string gold_answer;
};

std::vector<EncodedExample> encode_examples(std::span<const TrainingExample> examples,
                                            const Corpus& corpus, EncoderProvider& provider);

/// Phrase embeddings from the preceding `capacity` batches. Stored embeddings
/// are snapshots: they enter the loss as constants.
class PreBatchQueue {
 public:
  explicit PreBatchQueue(std::size_t capacity_batches = 0) : capacity_(capacity_batches) {}

  void push(std::vector<PhraseEmbedding> batch);
  void clear() { batches_.clear(); }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const;
  /// Entries oldest batch first.
  std::vector<const PhraseEmbedding*> entries() const;

 private:
  std::size_t capacity_;
  std::deque<std::vector<PhraseEmbedding>> batches_;
};

/// Mean over the batch of the softmax cross-entropy of each context's positive
/// phrase against the other B-1 in-batch positives and the queue contents.
double loss_neg(std::span<const EncodedExample> batch, const PreBatchQueue& queue,
                const ProjectionHead& head);

struct TurnLoss {
  double value = 0.0;
  std::size_t eligible = 0;  // examples with a previous context
};

/// Mean over eligible examples of the cross-entropy of Conv_i against the
/// other in-batch current contexts, all scored against Conv_{i-1}. Both sides
/// use the query head. Returns {0, 0} when nothing is eligible.
TurnLoss loss_turn(std::span<const EncodedExample> batch, const ProjectionHead& head);

struct LossReport {
  double l_neg = 0.0;
  double l_turn = 0.0;
  double l_total = 0.0;
  double grad_norm = 0.0;
  std::size_t turn_eligible = 0;
};

struct LossAndGradient {
  LossReport report;
  ProjectionHead gradient;
};

/// Weighted objective lambda1 * l_neg + lambda2 * l_turn and its analytic
/// gradient. A term whose weight is zero is not evaluated and reports 0.
LossAndGradient loss_and_gradient(std::span<const EncodedExample> batch, const PreBatchQueue& queue,
                                  const ProjectionHead& head, double lambda1, double lambda2);

LossReport loss_total(std::span<const EncodedExample> batch, const PreBatchQueue& queue,
                      const ProjectionHead& head, double lambda1, double lambda2);

ProjectionHead grad_head(std::span<const EncodedExample> batch, const PreBatchQueue& queue,
                         const ProjectionHead& head, double lambda1, double lambda2);

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t prebatch_batches = 2;
  std::size_t epochs = 30;
  double learning_rate = 0.05;
  double lambda1 = 4.0;
  double lambda2 = 1.0;
  std::uint64_t seed = 7;
  std::size_t dim = kDefaultDim;
  std::size_t max_phrase_len = kDefaultMaxPhraseLen;
  std::size_t token_budget = kUnlimitedBudget;
  std::size_t finetune_epochs = 10;
  std::size_t finetune_topk = 20;
  double finetune_learning_rate = 0.2;

  void validate() const;
};

/// Reads `key = value` lines; '#' starts a comment. Unknown keys are errors.
TrainConfig parse_train_config(std::istream& in, TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});

struct StepRecord {
  std::size_t step = 0;
  LossReport loss;
};

void write_trajectory(std::ostream& out, std::span<const StepRecord> trajectory);

class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, std::vector<StepRecord> trajectory)
      : NumericError(what), trajectory_(std::move(trajectory)) {}
  const std::vector<StepRecord>& trajectory() const { return trajectory_; }

 private:
  std::vector<StepRecord> trajectory_;
};

struct TrainResult {
  ProjectionHead head;
  std::vector<StepRecord> trajectory;
};

inline constexpr double kDivergenceThreshold = 1e6;

/// Plain gradient descent with seeded shuffling. Batches of fewer than two
/// examples at the end of an epoch are dropped.
TrainResult train(std::span<const EncodedExample> dataset, const TrainConfig& config,
                  ProjectionHead initial);

/// Updates only the query-side matrices against a frozen index. Each context's
/// negatives are its top-k retrieved phrases, minus the positive entry and any
/// phrase whose normalized surface equals the gold answer.
TrainResult finetune_query(const PhraseIndex& index, std::span<const EncodedExample> dataset,
                           const TrainConfig& config, ProjectionHead head);

/// Fraction of eligible examples whose previous context scores higher against
/// the current context than every in-batch context from other conversations.
/// Batches are formed exactly as train() forms them for one epoch.
double turn_dependency_accuracy(std::span<const EncodedExample> dataset, const ProjectionHead& head,
                                std::size_t batch_size, std::uint64_t seed);

}  // namespace phraseforge
