// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "phraseforge/phrase_index.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>
#include <queue>
#include <cstring>
#include <tuple>
#include <unordered_set>

#include "binary_io.hpp"
#include "phraseforge/errors.hpp"

namespace phraseforge {

namespace {

constexpr char kIndexMagic[8] = {'P', 'F', 'P', 'H', 'R', 'I', 'D', 'X'};
constexpr std::uint32_t kIndexVersion = 1;

void check_query(const PhraseIndex& index, const QueryEmbedding& q) {
  if (q.dim() != index.dim() || q.end.size() != q.start.size()) {
    throw ConfigError("query dim " + std::to_string(q.dim()) + " != index dim " +
                      std::to_string(index.dim()));
  }
}

RankedPhrase make_ranked(const PhraseIndex& index, std::size_t entry, double s, std::size_t rank) {
  return RankedPhrase{index.span(entry), s, rank, entry};
}

}  // namespace

// Eight independent double accumulators, combined in a fixed order, so the
// result is deterministic while the loop can pipeline.
double score_packed(std::span<const double> query, std::span<const float> phrase) {
  constexpr std::size_t kLanes = 8;
  std::array<double, kLanes> acc{};
  const std::size_t n = query.size();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += query[i + l] * static_cast<double>(phrase[i + l]);
  }
  for (; i < n; ++i) acc[0] += query[i] * static_cast<double>(phrase[i]);
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

double score(const QueryEmbedding& q, const PhraseEmbedding& p) {
  if (q.dim() != p.dim() || q.end.size() != p.end.size()) {
    throw ConfigError("score: dimension mismatch");
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < q.start.size(); ++i) acc += q.start[i] * p.start[i];
  for (Eigen::Index i = 0; i < q.end.size(); ++i) acc += q.end[i] * p.end[i];
  return acc;
}

std::vector<double> pack_query(const QueryEmbedding& q) {
  std::vector<double> packed(q.start.data(), q.start.data() + q.start.size());
  packed.insert(packed.end(), q.end.data(), q.end.data() + q.end.size());
  return packed;
}

PhraseFeatures compute_phrase_features(const Corpus& corpus, EncoderProvider& provider,
                                       std::size_t max_phrase_len) {
  if (corpus.empty()) throw ConfigError("cannot index an empty corpus");
  PhraseFeatures out;
  out.dim = provider.dim();
  out.fingerprint = corpus.fingerprint();
  for (const auto& p : corpus.passages()) out.passage_ids.push_back(p.passage_id);
  std::sort(out.passage_ids.begin(), out.passage_ids.end());
  for (std::size_t slot = 0; slot < out.passage_ids.size(); ++slot) {
    const Passage& passage = corpus.at(out.passage_ids[slot]);
    auto spans = enumerate_phrase_spans(passage, max_phrase_len);
    if (spans.empty()) continue;
    std::vector<std::string> texts;
    texts.reserve(spans.size());
    for (const auto& s : spans) texts.push_back(compose_phrase_text(s, passage));
    std::vector<BaseEmbedding> base;
    try {
      base = provider.embed(texts);
    } catch (const Error& e) {
      throw TransportError("encoding passage " + passage.passage_id + ": " + e.what());
    }
    if (base.size() != spans.size()) {
      throw ProtocolError("encoding passage " + passage.passage_id + ": wrong embedding count");
    }
    for (std::size_t i = 0; i < spans.size(); ++i) {
      if (base[i].dim() != out.dim) {
        throw ConfigError("encoding passage " + passage.passage_id + ": dim mismatch");
      }
      out.spans.push_back(std::move(spans[i]));
      out.passage_of.push_back(static_cast<std::uint32_t>(slot));
      out.base.push_back(std::move(base[i]));
    }
  }
  return out;
}

void append_packed(const PhraseEmbedding& e, std::vector<float>& out) {
  for (Eigen::Index i = 0; i < e.start.size(); ++i) out.push_back(static_cast<float>(e.start[i]));
  for (Eigen::Index i = 0; i < e.end.size(); ++i) out.push_back(static_cast<float>(e.end[i]));
}

PhraseIndex index_from_features(const PhraseFeatures& features, const ProjectionHead& head) {
  head.validate();
  if (head.dim() != features.dim) {
    throw ConfigError("head dim " + std::to_string(head.dim()) + " != feature dim " +
                      std::to_string(features.dim));
  }
  // Passages without spans are left out of the table so that a save/load
  // round-trip reproduces it exactly.
  std::vector<std::string> passage_ids;
  std::vector<std::uint32_t> remap(features.passage_ids.size(), 0);
  for (std::size_t i = 0; i < features.spans.size(); ++i) {
    const auto slot = features.passage_of[i];
    if (passage_ids.empty() || passage_ids.back() != features.passage_ids[slot]) {
      passage_ids.push_back(features.passage_ids[slot]);
      remap[slot] = static_cast<std::uint32_t>(passage_ids.size() - 1);
    }
  }
  std::vector<IndexEntry> entries;
  std::vector<std::string> surfaces;
  std::vector<float> vectors;
  entries.reserve(features.spans.size());
  surfaces.reserve(features.spans.size());
  vectors.reserve(features.spans.size() * 2 * features.dim);
  for (std::size_t i = 0; i < features.spans.size(); ++i) {
    const auto& s = features.spans[i];
    entries.push_back(IndexEntry{remap[features.passage_of[i]], static_cast<std::uint32_t>(s.start_token),
                                 static_cast<std::uint32_t>(s.end_token)});
    surfaces.push_back(s.surface);
    append_packed(project_phrase(head, features.base[i]), vectors);
  }
  return PhraseIndex(features.dim, features.fingerprint, std::move(passage_ids), std::move(entries),
                     std::move(surfaces), std::move(vectors));
}

PhraseIndex build_index(const Corpus& corpus, const ProjectionHead& head, EncoderProvider& provider,
                        std::size_t max_phrase_len) {
  if (provider.dim() != head.dim()) {
    throw ConfigError("provider dim " + std::to_string(provider.dim()) + " != head dim " +
                      std::to_string(head.dim()));
  }
  return index_from_features(compute_phrase_features(corpus, provider, max_phrase_len), head);
}

PhraseIndex::PhraseIndex(std::size_t dim, std::uint64_t fingerprint,
                         std::vector<std::string> passage_ids, std::vector<IndexEntry> entries,
                         std::vector<std::string> surfaces, std::vector<float> vectors)
    : dim_(dim),
      fingerprint_(fingerprint),
      passage_ids_(std::move(passage_ids)),
      entries_(std::move(entries)),
      surfaces_(std::move(surfaces)),
      vectors_(std::move(vectors)) {
  if (surfaces_.size() != entries_.size() || vectors_.size() != entries_.size() * 2 * dim_) {
    throw FormatError("index arrays have inconsistent sizes");
  }
  if (!std::is_sorted(passage_ids_.begin(), passage_ids_.end())) {
    throw FormatError("index passage table is not sorted");
  }
  passage_begin_.assign(passage_ids_.size() + 1, entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.passage >= passage_ids_.size() || e.start > e.end) {
      throw FormatError("index entry " + std::to_string(i) + " is malformed");
    }
    if (i > 0) {
      const auto& prev = entries_[i - 1];
      if (std::tie(prev.passage, prev.start, prev.end) >= std::tie(e.passage, e.start, e.end)) {
        throw FormatError("index entries are not in (passage, start, end) order");
      }
    }
  }
  for (std::size_t i = entries_.size(); i-- > 0;) passage_begin_[entries_[i].passage] = i;
  for (std::size_t p = passage_ids_.size(); p-- > 0;) {
    passage_begin_[p] = std::min(passage_begin_[p], passage_begin_[p + 1]);
  }
}

PhraseSpan PhraseIndex::span(std::size_t entry) const {
  const auto& e = entries_.at(entry);
  return PhraseSpan{passage_ids_[e.passage], e.start, e.end, surfaces_[entry]};
}

PhraseEmbedding PhraseIndex::embedding(std::size_t entry) const {
  const auto v = vector(entry);
  const auto d = static_cast<Eigen::Index>(dim_);
  PhraseEmbedding out{Eigen::VectorXd(d), Eigen::VectorXd(d)};
  for (Eigen::Index i = 0; i < d; ++i) {
    out.start[i] = static_cast<double>(v[static_cast<std::size_t>(i)]);
    out.end[i] = static_cast<double>(v[static_cast<std::size_t>(i + d)]);
  }
  return out;
}

std::pair<std::size_t, std::size_t> PhraseIndex::passage_range(std::string_view passage_id) const {
  auto it = std::lower_bound(passage_ids_.begin(), passage_ids_.end(), passage_id);
  if (it == passage_ids_.end() || *it != passage_id) return {0, 0};
  const auto slot = static_cast<std::size_t>(it - passage_ids_.begin());
  return {passage_begin_[slot], passage_begin_[slot + 1]};
}

std::optional<std::size_t> PhraseIndex::find(std::string_view passage_id, std::size_t start,
                                             std::size_t end) const {
  const auto [b, e] = passage_range(passage_id);
  auto it = std::lower_bound(entries_.begin() + static_cast<std::ptrdiff_t>(b),
                             entries_.begin() + static_cast<std::ptrdiff_t>(e), std::pair(start, end),
                             [](const IndexEntry& x, const std::pair<std::size_t, std::size_t>& key) {
                               return std::pair<std::size_t, std::size_t>(x.start, x.end) < key;
                             });
  if (it == entries_.begin() + static_cast<std::ptrdiff_t>(e) || it->start != start ||
      it->end != end) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(it - entries_.begin());
}

bool PhraseIndex::operator==(const PhraseIndex& other) const {
  return dim_ == other.dim_ && fingerprint_ == other.fingerprint_ &&
         passage_ids_ == other.passage_ids_ && entries_ == other.entries_ &&
         surfaces_ == other.surfaces_ && vectors_.size() == other.vectors_.size() &&
         std::memcmp(vectors_.data(), other.vectors_.data(), vectors_.size() * sizeof(float)) == 0;
}

std::vector<RankedPhrase> search_topk(const PhraseIndex& index, const QueryEmbedding& q,
                                      std::size_t k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  check_query(index, q);
  const auto packed = pack_query(q);
  struct Hit {
    double score;
    std::size_t entry;
  };
  // Heap top is the worst kept hit: lowest score, then latest entry.
  auto worse_on_top = [](const Hit& a, const Hit& b) {
    return a.score > b.score || (a.score == b.score && a.entry < b.entry);
  };
  std::priority_queue<Hit, std::vector<Hit>, decltype(worse_on_top)> heap(worse_on_top);
  const std::size_t n = index.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double s = score_packed(packed, index.vector(i));
    if (heap.size() < k) {
      heap.push({s, i});
    } else if (s > heap.top().score) {
      heap.pop();
      heap.push({s, i});
    }
  }
  std::vector<Hit> hits;
  hits.reserve(heap.size());
  while (!heap.empty()) {
    hits.push_back(heap.top());
    heap.pop();
  }
  std::reverse(hits.begin(), hits.end());
  std::vector<RankedPhrase> out;
  out.reserve(hits.size());
  for (std::size_t r = 0; r < hits.size(); ++r) {
    out.push_back(make_ranked(index, hits[r].entry, hits[r].score, r + 1));
  }
  return out;
}

std::vector<RankedPhrase> brute_force_oracle(const PhraseIndex& index, const QueryEmbedding& q,
                                             std::size_t k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  check_query(index, q);
  const auto packed = pack_query(q);
  std::vector<double> scores(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) scores[i] = score_packed(packed, index.vector(i));
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(std::min(k, order.size()));
  std::vector<RankedPhrase> out;
  for (std::size_t r = 0; r < order.size(); ++r) {
    out.push_back(make_ranked(index, order[r], scores[order[r]], r + 1));
  }
  return out;
}

std::vector<std::string> passages_from_phrases(std::span<const RankedPhrase> ranked,
                                               std::size_t cutoff) {
  if (cutoff < 1) throw ConfigError("cutoff must be >= 1");
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& r : ranked) {
    if (out.size() == cutoff) break;
    if (seen.insert(r.span.passage_id).second) out.push_back(r.span.passage_id);
  }
  return out;
}

void save_index(const PhraseIndex& index, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write index file: " + path.string());
  out.write(kIndexMagic, sizeof(kIndexMagic));
  detail::write_le<std::uint32_t>(out, kIndexVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(index.dim()));
  detail::write_le<std::uint64_t>(out, index.size());
  detail::write_le<std::uint64_t>(out, index.fingerprint());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto& e = index.entries()[i];
    detail::write_string(out, index.passage_ids()[e.passage]);
    detail::write_le<std::int32_t>(out, static_cast<std::int32_t>(e.start));
    detail::write_le<std::int32_t>(out, static_cast<std::int32_t>(e.end));
    for (float v : index.vector(i)) detail::write_le<float>(out, v);
  }
  if (!out) throw Error("failed writing index file: " + path.string());
}

namespace {

IndexHeader read_header(std::istream& in) {
  char magic[sizeof(kIndexMagic)];
  if (!in.read(magic, sizeof(magic)) || !std::equal(magic, magic + sizeof(magic), kIndexMagic)) {
    throw FormatError("not a phrase index file");
  }
  IndexHeader h;
  h.version = detail::read_le<std::uint32_t>(in, "version");
  if (h.version != kIndexVersion) {
    throw FormatError("unsupported index version " + std::to_string(h.version));
  }
  h.dim = detail::read_le<std::uint32_t>(in, "dim");
  if (h.dim < 2 || h.dim > 65536) throw FormatError("implausible index dim");
  h.count = detail::read_le<std::uint64_t>(in, "entry count");
  h.fingerprint = detail::read_le<std::uint64_t>(in, "fingerprint");
  return h;
}

}  // namespace

IndexHeader read_index_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("index not found: " + path.string());
  return read_header(in);
}

PhraseIndex load_index(const std::filesystem::path& path, const Corpus& corpus) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("index not found: " + path.string());
  const IndexHeader h = read_header(in);
  if (h.fingerprint != corpus.fingerprint()) {
    throw ConfigError("corpus fingerprint mismatch: index was built from a different corpus");
  }
  std::vector<std::string> passage_ids;
  std::vector<IndexEntry> entries;
  std::vector<std::string> surfaces;
  std::vector<float> vectors;
  const std::size_t width = 2 * static_cast<std::size_t>(h.dim);
  for (std::uint64_t i = 0; i < h.count; ++i) {
    std::string pid = detail::read_string(in, "passage id", 1U << 20);
    if (passage_ids.empty() || passage_ids.back() != pid) passage_ids.push_back(pid);
    const auto start = detail::read_le<std::int32_t>(in, "start");
    const auto end = detail::read_le<std::int32_t>(in, "end");
    const Passage* passage = corpus.find(pid);
    if (passage == nullptr || start < 0 || end < start ||
        static_cast<std::size_t>(end) >= passage->tokens.size()) {
      throw FormatError("index entry " + std::to_string(i) + " does not match the corpus");
    }
    entries.push_back(IndexEntry{static_cast<std::uint32_t>(passage_ids.size() - 1),
                                 static_cast<std::uint32_t>(start), static_cast<std::uint32_t>(end)});
    surfaces.push_back(span_surface(*passage, static_cast<std::size_t>(start),
                                    static_cast<std::size_t>(end)));
    for (std::size_t j = 0; j < width; ++j) vectors.push_back(detail::read_le<float>(in, "vector"));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in index file");
  return PhraseIndex(h.dim, h.fingerprint, std::move(passage_ids), std::move(entries),
                     std::move(surfaces), std::move(vectors));
}

}  // namespace phraseforge
