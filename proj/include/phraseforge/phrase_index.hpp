// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "phraseforge/corpus.hpp"
#include "phraseforge/encoder.hpp"

namespace phraseforge {

/// Dual-vector inner product <q.start, p.start> + <q.end, p.end>, accumulated
/// in double in a single pass over the concatenated [start; end] layout.
double score(const QueryEmbedding& q, const PhraseEmbedding& p);

/// Same accumulation over packed [start; end] vectors.
double score_packed(std::span<const double> query, std::span<const float> phrase);

std::vector<double> pack_query(const QueryEmbedding& q);

/// Base features of every enumerated span of a corpus, ordered by
/// (passage_id, start, end). Projection-independent, so one feature set can be
/// indexed under many heads.
struct PhraseFeatures {
  std::vector<std::string> passage_ids;  // sorted
  std::vector<PhraseSpan> spans;
  std::vector<std::uint32_t> passage_of;  // span -> slot in passage_ids
  std::vector<BaseEmbedding> base;
  std::size_t dim = 0;
  std::uint64_t fingerprint = 0;
};

/// Throws ConfigError on an empty corpus; provider failures are rethrown with
/// the failing passage id.
PhraseFeatures compute_phrase_features(const Corpus& corpus, EncoderProvider& provider,
                                       std::size_t max_phrase_len = kDefaultMaxPhraseLen);

struct IndexEntry {
  std::uint32_t passage = 0;  // slot in passage_ids()
  std::uint32_t start = 0;
  std::uint32_t end = 0;

  bool operator==(const IndexEntry&) const = default;
};

/// Flat phrase index: entries sorted by (passage_id, start, end), each with a
/// packed float32 [start; end] vector.
class PhraseIndex {
 public:
  PhraseIndex() = default;
  PhraseIndex(std::size_t dim, std::uint64_t fingerprint, std::vector<std::string> passage_ids,
              std::vector<IndexEntry> entries, std::vector<std::string> surfaces,
              std::vector<float> vectors);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::uint64_t fingerprint() const { return fingerprint_; }

  std::span<const std::string> passage_ids() const { return passage_ids_; }
  std::span<const IndexEntry> entries() const { return entries_; }
  std::span<const float> vectors() const { return vectors_; }
  std::span<const float> vector(std::size_t entry) const {
    return std::span<const float>(vectors_).subspan(entry * 2 * dim_, 2 * dim_);
  }
  const std::string& passage_id(std::size_t entry) const {
    return passage_ids_[entries_[entry].passage];
  }
  PhraseSpan span(std::size_t entry) const;
  PhraseEmbedding embedding(std::size_t entry) const;

  std::optional<std::size_t> find(std::string_view passage_id, std::size_t start,
                                  std::size_t end) const;
  /// Half-open entry range belonging to one passage; empty if absent.
  std::pair<std::size_t, std::size_t> passage_range(std::string_view passage_id) const;

  bool operator==(const PhraseIndex& other) const;

 private:
  std::size_t dim_ = 0;
  std::uint64_t fingerprint_ = 0;
  std::vector<std::string> passage_ids_;
  std::vector<IndexEntry> entries_;
  std::vector<std::string> surfaces_;
  std::vector<float> vectors_;
  std::vector<std::size_t> passage_begin_;  // per passage slot, plus end sentinel
};

/// Packs projected phrase vectors to float32; shared by index building and the
/// pipeline reader so both see identical bits.
void append_packed(const PhraseEmbedding& e, std::vector<float>& out);

PhraseIndex index_from_features(const PhraseFeatures& features, const ProjectionHead& head);

PhraseIndex build_index(const Corpus& corpus, const ProjectionHead& head, EncoderProvider& provider,
                        std::size_t max_phrase_len = kDefaultMaxPhraseLen);

struct RankedPhrase {
  PhraseSpan span;
  double score = 0.0;
  std::size_t rank = 0;   // 1-based
  std::size_t entry = 0;  // position in the index
};

inline constexpr std::size_t kDefaultSearchK = 100;

/// Exact top-k by score; ties go to the earlier entry.
std::vector<RankedPhrase> search_topk(const PhraseIndex& index, const QueryEmbedding& q,
                                      std::size_t k);

/// Reference implementation of search_topk: full scan then stable sort.
std::vector<RankedPhrase> brute_force_oracle(const PhraseIndex& index, const QueryEmbedding& q,
                                             std::size_t k);

/// Passage ids in order of each passage's best phrase, truncated to cutoff.
std::vector<std::string> passages_from_phrases(std::span<const RankedPhrase> ranked,
                                               std::size_t cutoff);

struct IndexHeader {
  std::uint32_t version = 0;
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  std::uint64_t fingerprint = 0;
};

void save_index(const PhraseIndex& index, const std::filesystem::path& path);
IndexHeader read_index_header(const std::filesystem::path& path);
/// Throws FormatError if the file is malformed and ConfigError if it was built
/// from another corpus.
PhraseIndex load_index(const std::filesystem::path& path, const Corpus& corpus);

}  // namespace phraseforge
