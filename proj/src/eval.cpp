// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "phraseforge/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "phraseforge/errors.hpp"

namespace phraseforge {

namespace {

constexpr std::string_view kPunctuation = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

std::vector<std::string> split(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

const std::vector<std::size_t> kDefaultKs = {1, 5, 10, 20, 100};

}  // namespace

std::string normalize_answer(std::string_view s) {
  std::string cleaned;
  cleaned.reserve(s.size());
  for (char c : s) {
    if (kPunctuation.find(c) != std::string_view::npos) continue;
    cleaned.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
  }
  std::string out;
  for (const auto& tok : split(cleaned)) {
    if (tok == "a" || tok == "an" || tok == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

double f1_score(std::string_view prediction, std::string_view gold) {
  const auto pred = split(normalize_answer(prediction));
  const auto ref = split(normalize_answer(gold));
  if (pred.empty() || ref.empty()) return pred.empty() && ref.empty() ? 1.0 : 0.0;
  std::unordered_map<std::string, int> counts;
  for (const auto& t : ref) ++counts[t];
  int same = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++same;
    }
  }
  if (same == 0) return 0.0;
  const double p = static_cast<double>(same) / static_cast<double>(pred.size());
  const double r = static_cast<double>(same) / static_cast<double>(ref.size());
  return 2.0 * p * r / (p + r);
}

int exact_match(std::string_view prediction, std::string_view gold) {
  return normalize_answer(prediction) == normalize_answer(gold) ? 1 : 0;
}

RetrievalMetrics retrieval_metrics(std::span<const std::vector<std::string>> ranked,
                                   std::span<const std::optional<std::string>> gold,
                                   std::size_t cutoff, std::span<const std::size_t> ks) {
  if (cutoff < 1) throw ConfigError("cutoff must be >= 1");
  if (ranked.size() != gold.size()) throw ConfigError("ranked/gold size mismatch");
  if (ks.empty()) ks = kDefaultKs;

  RetrievalMetrics m;
  std::map<std::size_t, std::size_t> hits;
  for (auto k : ks) hits[k] = 0;
  double rr_sum = 0.0;
  double prec_sum = 0.0;
  for (std::size_t q = 0; q < ranked.size(); ++q) {
    if (!gold[q]) {
      ++m.n_excluded;
      continue;
    }
    ++m.n_questions;
    const auto& list = ranked[q];
    auto it = std::find(list.begin(), list.end(), *gold[q]);
    const auto rank = static_cast<std::size_t>(it - list.begin()) + 1;  // > size when absent
    for (auto& [k, h] : hits) {
      if (it != list.end() && rank <= k) ++h;
    }
    if (it != list.end() && rank <= cutoff) {
      rr_sum += 1.0 / static_cast<double>(rank);
      prec_sum += 1.0 / static_cast<double>(cutoff);
    }
  }
  const double n = static_cast<double>(m.n_questions);
  for (auto& [k, h] : hits) m.top_k_accuracy[k] = n > 0 ? static_cast<double>(h) / n : 0.0;
  m.mrr = n > 0 ? rr_sum / n : 0.0;
  m.precision = n > 0 ? prec_sum / n : 0.0;
  return m;
}

EvalReport make_eval_report(std::span<const AnswerRecord> records, std::size_t cutoff,
                            std::span<const std::size_t> ks) {
  EvalReport report;
  report.cutoff = cutoff;
  report.n_questions = records.size();
  std::vector<std::vector<std::string>> ranked;
  std::vector<std::optional<std::string>> gold;
  double f1 = 0.0;
  double em = 0.0;
  for (const auto& r : records) {
    f1 += f1_score(r.prediction, r.gold);
    em += exact_match(r.prediction, r.gold);
    ranked.push_back(r.ranked_passages);
    gold.push_back(r.gold_passage_id);
  }
  if (!records.empty()) {
    report.f1 = f1 / static_cast<double>(records.size());
    report.em = em / static_cast<double>(records.size());
  }
  const auto rm = retrieval_metrics(ranked, gold, cutoff, ks);
  report.top_k_accuracy = rm.top_k_accuracy;
  report.mrr_at_10 = rm.mrr;
  report.precision_at_10 = rm.precision;
  report.n_retrieval_excluded = rm.n_excluded;
  return report;
}

LatencyReport bench_latency(std::span<const BenchSystem> systems, std::size_t n_questions,
                            std::size_t warmup, std::size_t repetitions) {
  if (systems.empty()) throw ConfigError("bench_latency needs at least one system");
  if (n_questions < 10) throw ConfigError("bench_latency needs at least 10 questions");
  if (repetitions < 1) throw ConfigError("repetitions must be >= 1");

  using clock = std::chrono::steady_clock;
  LatencyReport report;
  report.n_questions = n_questions;
  report.repetitions = repetitions;
  report.warmup = warmup;
  for (const auto& system : systems) {
    LatencyRow row;
    row.name = system.name;
    row.baseline = system.baseline;
    try {
      for (std::size_t w = 0; w < warmup; ++w) {
        for (std::size_t q = 0; q < n_questions; ++q) system.answer(q);
      }
      std::vector<double> passes;
      for (std::size_t r = 0; r < repetitions; ++r) {
        const auto t0 = clock::now();
        for (std::size_t q = 0; q < n_questions; ++q) system.answer(q);
        passes.push_back(std::chrono::duration<double>(clock::now() - t0).count());
      }
      std::sort(passes.begin(), passes.end());
      const std::size_t mid = passes.size() / 2;
      row.median_seconds =
          passes.size() % 2 == 1 ? passes[mid] : 0.5 * (passes[mid - 1] + passes[mid]);
      row.median_seconds = std::max(row.median_seconds, std::numeric_limits<double>::min());
      row.questions_per_sec = static_cast<double>(n_questions) / row.median_seconds;
    } catch (const std::exception& e) {
      row.failed = true;
      row.failure = e.what();
    }
    report.rows.push_back(std::move(row));
  }
  double fastest = std::numeric_limits<double>::infinity();
  for (const auto& row : report.rows) {
    if (!row.failed) fastest = std::min(fastest, row.median_seconds);
  }
  for (auto& row : report.rows) {
    if (!row.failed) row.relative_time = row.median_seconds / fastest;
  }
  return report;
}

}  // namespace phraseforge
