// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "phraseforge/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "phraseforge/errors.hpp"

namespace phraseforge {

namespace {

constexpr std::string_view kPunctuation = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

std::vector<std::string> bm25_terms(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& tok : tokenize_whitespace(text)) {
    if (tok.text == "[SEP]") continue;
    std::string term;
    for (char c : tok.text) {
      if (kPunctuation.find(c) != std::string_view::npos) continue;
      term.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
    }
    if (!term.empty()) out.push_back(std::move(term));
  }
  return out;
}

Bm25Index::Bm25Index(const Corpus& corpus, Bm25Params params) : params_(params) {
  if (corpus.empty()) throw ConfigError("cannot build BM25 over an empty corpus");
  std::size_t total = 0;
  for (const auto& p : corpus.passages()) {
    const auto slot = static_cast<std::uint32_t>(passage_ids_.size());
    passage_ids_.push_back(p.passage_id);
    slot_.emplace(p.passage_id, slot);
    const auto terms = bm25_terms(p.text);
    lengths_.push_back(terms.size());
    total += terms.size();
    std::unordered_map<std::string, std::uint32_t> tf;
    for (const auto& t : terms) ++tf[t];
    for (auto& [term, count] : tf) postings_[term].push_back(Posting{slot, count});
  }
  for (auto& [term, list] : postings_) {
    std::sort(list.begin(), list.end(),
              [](const Posting& a, const Posting& b) { return a.passage < b.passage; });
  }
  avg_length_ = static_cast<double>(total) / static_cast<double>(passage_ids_.size());
  if (!(avg_length_ > 0.0)) throw ConfigError("BM25 corpus has no terms");
}

const std::vector<Bm25Index::Posting>* Bm25Index::postings(std::string_view term) const {
  auto it = postings_.find(std::string(term));
  return it == postings_.end() ? nullptr : &it->second;
}

double Bm25Index::idf(std::string_view term) const {
  const auto* list = postings(term);
  const double df = list ? static_cast<double>(list->size()) : 0.0;
  const double n = static_cast<double>(passage_ids_.size());
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double Bm25Index::score(std::span<const std::string> query_terms,
                        std::string_view passage_id) const {
  auto it = slot_.find(std::string(passage_id));
  if (it == slot_.end()) throw NotFoundError("unknown passage_id: " + std::string(passage_id));
  const auto slot = static_cast<std::uint32_t>(it->second);
  const double norm = 1.0 - params_.b + params_.b * static_cast<double>(lengths_[slot]) / avg_length_;
  double total = 0.0;
  for (const auto& term : query_terms) {
    const auto* list = postings(term);
    if (list == nullptr) continue;
    auto p = std::lower_bound(list->begin(), list->end(), slot,
                              [](const Posting& x, std::uint32_t s) { return x.passage < s; });
    if (p == list->end() || p->passage != slot) continue;
    const double tf = p->tf;
    total += idf(term) * tf * (params_.k1 + 1.0) / (tf + params_.k1 * norm);
  }
  return total;
}

std::vector<double> Bm25Index::score_all(std::span<const std::string> query_terms) const {
  std::vector<double> scores(passage_ids_.size(), 0.0);
  for (const auto& term : query_terms) {
    const auto* list = postings(term);
    if (list == nullptr) continue;
    const double w = idf(term);
    for (const auto& p : *list) {
      const double norm =
          1.0 - params_.b + params_.b * static_cast<double>(lengths_[p.passage]) / avg_length_;
      const double tf = p.tf;
      scores[p.passage] += w * tf * (params_.k1 + 1.0) / (tf + params_.k1 * norm);
    }
  }
  return scores;
}

DensePassageIndex::DensePassageIndex(const PhraseIndex& index)
    : dim_(index.dim()),
      passage_ids_(index.passage_ids().begin(), index.passage_ids().end()) {
  const std::size_t width = 2 * dim_;
  vectors_.assign(passage_ids_.size() * width, 0.0);
  for (std::size_t p = 0; p < passage_ids_.size(); ++p) {
    const auto [b, e] = index.passage_range(passage_ids_[p]);
    if (b == e) continue;
    double* out = vectors_.data() + p * width;
    for (std::size_t i = b; i < e; ++i) {
      const auto v = index.vector(i);
      for (std::size_t j = 0; j < width; ++j) out[j] += static_cast<double>(v[j]);
    }
    for (std::size_t j = 0; j < width; ++j) out[j] /= static_cast<double>(e - b);
  }
}

std::vector<double> DensePassageIndex::score_all(const QueryEmbedding& q) const {
  if (q.dim() != dim_) throw ConfigError("query dim does not match dense passage index");
  const auto packed = pack_query(q);
  const std::size_t width = 2 * dim_;
  std::vector<double> scores(passage_ids_.size());
  for (std::size_t p = 0; p < passage_ids_.size(); ++p) {
    const double* v = vectors_.data() + p * width;
    double acc = 0.0;
    for (std::size_t j = 0; j < width; ++j) acc += packed[j] * v[j];
    scores[p] = acc;
  }
  return scores;
}

std::vector<RankedPassage> top_passages(std::span<const std::string> ids,
                                        std::span<const double> scores, std::size_t k) {
  if (k < 1) throw ConfigError("K must be >= 1");
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  const std::size_t keep = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    better);
  std::vector<RankedPassage> out;
  for (std::size_t r = 0; r < keep; ++r) out.push_back({ids[order[r]], scores[order[r]]});
  return out;
}

std::vector<RankedPassage> retrieve_passages_bm25(const Bm25Index& index, const ConvContext& ctx,
                                                  std::size_t k) {
  const auto terms = bm25_terms(ctx.serialized_text);
  const auto scores = index.score_all(terms);
  return top_passages(index.passage_ids(), scores, k);
}

std::vector<RankedPassage> retrieve_passages_dense(const DensePassageIndex& index,
                                                   const QueryEmbedding& q, std::size_t k) {
  const auto scores = index.score_all(q);
  return top_passages(index.passage_ids(), scores, k);
}

PipelineAnswer read_answer(const QueryEmbedding& q, std::span<const RankedPassage> passages,
                           const Corpus& corpus, const ProjectionHead& head,
                           EncoderProvider& provider, std::size_t max_phrase_len) {
  if (passages.empty()) throw ConfigError("reader needs at least one passage");
  const auto packed = pack_query(q);
  PipelineAnswer best;
  bool found = false;
  std::vector<float> buffer;
  for (std::size_t r = 0; r < passages.size(); ++r) {
    const Passage& passage = corpus.at(passages[r].passage_id);
    auto spans = enumerate_phrase_spans(passage, max_phrase_len);
    if (spans.empty()) continue;
    std::vector<std::string> texts;
    texts.reserve(spans.size());
    for (const auto& s : spans) texts.push_back(compose_phrase_text(s, passage));
    const auto base = provider.embed(texts);
    if (base.size() != spans.size()) throw ProtocolError("provider returned wrong embedding count");
    for (std::size_t i = 0; i < spans.size(); ++i) {
      buffer.clear();
      append_packed(project_phrase(head, base[i]), buffer);
      const double s = score_packed(packed, buffer);
      if (!found || s > best.score) {
        found = true;
        best.score = s;
        best.span = spans[i];
        best.retriever_rank_of_source = r + 1;
      }
    }
  }
  if (found) {
    best.answer = best.span.surface;
    best.source_passage_id = best.span.passage_id;
  }
  return best;
}

Pipeline::Pipeline(const Corpus& corpus, const ProjectionHead& head, EncoderProvider& provider,
                   RetrieverKind kind, const PhraseIndex* phrase_index,
                   std::size_t top_k_passages, std::size_t max_phrase_len)
    : corpus_(corpus),
      head_(head),
      provider_(provider),
      kind_(kind),
      k_(top_k_passages),
      max_phrase_len_(max_phrase_len) {
  if (k_ < 1) throw ConfigError("top-k passages must be >= 1");
  if (kind == RetrieverKind::kBm25) {
    bm25_ = std::make_unique<Bm25Index>(corpus);
  } else {
    if (phrase_index == nullptr) throw ConfigError("dense retriever needs a phrase index");
    dense_ = std::make_unique<DensePassageIndex>(*phrase_index);
  }
}

Pipeline::Result Pipeline::answer(const ConvContext& ctx) const {
  Result out;
  const auto t0 = std::chrono::steady_clock::now();
  const QueryEmbedding q = encode_context(ctx, head_, provider_);
  out.retrieved = kind_ == RetrieverKind::kBm25 ? retrieve_passages_bm25(*bm25_, ctx, k_)
                                                : retrieve_passages_dense(*dense_, q, k_);
  const double retrieve_ms = elapsed_ms(t0);
  const auto t1 = std::chrono::steady_clock::now();
  out.answer = read_answer(q, out.retrieved, corpus_, head_, provider_, max_phrase_len_);
  out.answer.read_ms = elapsed_ms(t1);
  out.answer.retrieve_ms = retrieve_ms;
  return out;
}

}  // namespace phraseforge
