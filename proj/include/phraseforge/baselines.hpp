// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "phraseforge/corpus.hpp"
#include "phraseforge/encoder.hpp"
#include "phraseforge/phrase_index.hpp"

namespace phraseforge {

/// Lowercased, punctuation-stripped whitespace terms. The context separator
/// token is dropped.
std::vector<std::string> bm25_terms(std::string_view text);

struct Bm25Params {
  double k1 = 0.9;
  double b = 0.4;
};

/// Okapi BM25 over an inverted index of the corpus.
class Bm25Index {
 public:
  struct Posting {
    std::uint32_t passage;  // position in passage_ids()
    std::uint32_t tf;
  };

  explicit Bm25Index(const Corpus& corpus, Bm25Params params = {});

  /// ln(1 + (N - df + 0.5) / (df + 0.5)).
  double idf(std::string_view term) const;
  /// Sum over query terms (repeats included) of idf * tf (k1 + 1) / (tf + k1 (1 - b + b len/avglen)).
  double score(std::span<const std::string> query_terms, std::string_view passage_id) const;
  /// Scores of every passage, aligned with passage_ids().
  std::vector<double> score_all(std::span<const std::string> query_terms) const;

  std::span<const std::string> passage_ids() const { return passage_ids_; }
  const std::vector<Posting>* postings(std::string_view term) const;
  std::size_t passage_length(std::size_t slot) const { return lengths_[slot]; }
  double average_length() const { return avg_length_; }
  std::size_t vocabulary_size() const { return postings_.size(); }
  const Bm25Params& params() const { return params_; }

 private:
  Bm25Params params_;
  std::vector<std::string> passage_ids_;  // corpus order
  std::unordered_map<std::string, std::size_t> slot_;
  std::vector<std::size_t> lengths_;
  double avg_length_ = 0.0;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
};

/// Dense passage vectors: the mean phrase start vector of each passage followed
/// by the mean end vector, taken from an existing phrase index.
class DensePassageIndex {
 public:
  explicit DensePassageIndex(const PhraseIndex& index);

  std::span<const std::string> passage_ids() const { return passage_ids_; }
  std::vector<double> score_all(const QueryEmbedding& q) const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> passage_ids_;
  std::vector<double> vectors_;  // packed, 2*dim per passage
};

enum class RetrieverKind { kBm25, kDense };

inline constexpr std::size_t kDefaultTopKPassages = 5;

struct RankedPassage {
  std::string passage_id;
  double score = 0.0;
};

/// Top-K passages by score; ties go to the lexicographically smaller id.
std::vector<RankedPassage> top_passages(std::span<const std::string> ids,
                                        std::span<const double> scores, std::size_t k);

std::vector<RankedPassage> retrieve_passages_bm25(const Bm25Index& index, const ConvContext& ctx,
                                                  std::size_t k = kDefaultTopKPassages);
std::vector<RankedPassage> retrieve_passages_dense(const DensePassageIndex& index,
                                                   const QueryEmbedding& q,
                                                   std::size_t k = kDefaultTopKPassages);

struct PipelineAnswer {
  std::string answer;
  std::string source_passage_id;
  std::size_t retriever_rank_of_source = 0;  // 1-based
  PhraseSpan span;
  double score = 0.0;
  double retrieve_ms = 0.0;
  double read_ms = 0.0;
};

/// Extractive reader: encodes every span of the given passages with the phrase
/// head at read time and returns the best-scoring one (ties to the earlier
/// passage rank, then earlier span).
PipelineAnswer read_answer(const QueryEmbedding& q, std::span<const RankedPassage> passages,
                           const Corpus& corpus, const ProjectionHead& head,
                           EncoderProvider& provider,
                           std::size_t max_phrase_len = kDefaultMaxPhraseLen);

/// Two-stage retriever + reader.
class Pipeline {
 public:
  Pipeline(const Corpus& corpus, const ProjectionHead& head, EncoderProvider& provider,
           RetrieverKind kind, const PhraseIndex* phrase_index = nullptr,
           std::size_t top_k_passages = kDefaultTopKPassages,
           std::size_t max_phrase_len = kDefaultMaxPhraseLen);

  struct Result {
    PipelineAnswer answer;
    std::vector<RankedPassage> retrieved;
  };

  Result answer(const ConvContext& ctx) const;

  RetrieverKind kind() const { return kind_; }

 private:
  const Corpus& corpus_;
  const ProjectionHead& head_;
  EncoderProvider& provider_;
  RetrieverKind kind_;
  std::size_t k_;
  std::size_t max_phrase_len_;
  std::unique_ptr<Bm25Index> bm25_;
  std::unique_ptr<DensePassageIndex> dense_;
};

}  // namespace phraseforge
