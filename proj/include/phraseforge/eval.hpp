// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace phraseforge {

/// SQuAD answer normalization: lowercase, strip ASCII punctuation, drop the
/// article tokens a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view s);

double f1_score(std::string_view prediction, std::string_view gold);
int exact_match(std::string_view prediction, std::string_view gold);

inline constexpr std::size_t kDefaultCutoff = 10;

struct RetrievalMetrics {
  std::map<std::size_t, double> top_k_accuracy;
  double mrr = 0.0;
  double precision = 0.0;
  std::size_t n_questions = 0;  // questions with a gold passage
  std::size_t n_excluded = 0;   // questions without one
};

/// Top-k accuracy for each k in ks, plus MRR and single-gold precision, both
/// computed within the first `cutoff` ranks.
RetrievalMetrics retrieval_metrics(std::span<const std::vector<std::string>> ranked,
                                   std::span<const std::optional<std::string>> gold,
                                   std::size_t cutoff = kDefaultCutoff,
                                   std::span<const std::size_t> ks = {});

struct EvalReport {
  double f1 = 0.0;
  double em = 0.0;
  std::map<std::size_t, double> top_k_accuracy;
  double mrr_at_10 = 0.0;
  double precision_at_10 = 0.0;
  std::size_t n_questions = 0;
  std::size_t n_retrieval_excluded = 0;
  std::size_t cutoff = kDefaultCutoff;
};

struct AnswerRecord {
  std::string prediction;
  std::string gold;
  std::vector<std::string> ranked_passages;
  std::optional<std::string> gold_passage_id;
};

EvalReport make_eval_report(std::span<const AnswerRecord> records,
                            std::size_t cutoff = kDefaultCutoff,
                            std::span<const std::size_t> ks = {});

/// One system under latency test: answers a single question by index.
struct BenchSystem {
  std::string name;
  std::function<void(std::size_t question)> answer;
  bool baseline = false;
};

struct LatencyRow {
  std::string name;
  bool baseline = false;
  bool failed = false;
  std::string failure;
  double median_seconds = 0.0;  // one full pass over the questions
  double relative_time = 0.0;
  double questions_per_sec = 0.0;
};

struct LatencyReport {
  std::vector<LatencyRow> rows;
  std::size_t n_questions = 0;
  std::size_t repetitions = 0;
  std::size_t warmup = 0;
};

/// Times each system sequentially over all questions: `warmup` untimed passes,
/// then the median of `repetitions` timed passes. relative_time is normalized
/// to the fastest system that did not fail.
LatencyReport bench_latency(std::span<const BenchSystem> systems, std::size_t n_questions,
                            std::size_t warmup = 2, std::size_t repetitions = 5);

}  // namespace phraseforge
