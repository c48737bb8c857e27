// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "phraseforge/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "binary_io.hpp"
#include "phraseforge/errors.hpp"
#include "phraseforge/hash.hpp"

namespace phraseforge {

namespace {

constexpr std::uint64_t kStartSalt = 0x5354415254ULL;  // "START"
constexpr std::uint64_t kEndSalt = 0x454e44ULL;        // "END"
constexpr char kHeadMagic[8] = {'P', 'F', 'H', 'E', 'A', 'D', '0', '1'};
constexpr std::uint32_t kHeadVersion = 1;

struct Bucket {
  Eigen::Index index;
  double sign;
};

Bucket bucket_of(std::uint64_t h, std::size_t dim) {
  return {static_cast<Eigen::Index>(h % dim), (h >> 63) != 0 ? -1.0 : 1.0};
}

void normalize_or_keep_zero(Eigen::VectorXd& v) {
  const double n = v.norm();
  if (n > 0.0) v /= n;
}

void check_dims(const ProjectionHead& head, const BaseEmbedding& base) {
  if (head.dim() != base.dim() || base.end.size() != base.start.size()) {
    throw ConfigError("dimension mismatch: head " + std::to_string(head.dim()) + ", features " +
                      std::to_string(base.dim()));
  }
}

}  // namespace

FeatureParts featurize_parts(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (dim < 2) throw ConfigError("featurizer dim must be >= 2");
  const auto d = static_cast<Eigen::Index>(dim);
  FeatureParts parts{Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d)};
  const auto tokens = tokenize_whitespace(text);
  const std::uint64_t seed_state = fnv1a64_u64(seed);
  const std::size_t n = tokens.size();
  for (std::size_t j = 0; j < n; ++j) {
    const std::uint64_t h = mix64(fnv1a64(tokens[j].text, seed_state));
    const auto bag = bucket_of(h, dim);
    parts.bag[bag.index] += bag.sign;
    // Boundary features are keyed by (token, distance from the boundary).
    const std::size_t from_end = n - 1 - j;
    const auto s = bucket_of(mix64(h ^ mix64(kStartSalt + j)), dim);
    parts.start_mix[s.index] += s.sign * std::pow(kPositionDecay, static_cast<double>(j));
    const auto e = bucket_of(mix64(h ^ mix64(kEndSalt + from_end)), dim);
    parts.end_mix[e.index] += e.sign * std::pow(kPositionDecay, static_cast<double>(from_end));
  }
  return parts;
}

BaseEmbedding featurize(std::string_view text, std::size_t dim, std::uint64_t seed) {
  auto parts = featurize_parts(text, dim, seed);
  BaseEmbedding out{parts.bag + kBoundaryWeight * parts.start_mix,
                    parts.bag + kBoundaryWeight * parts.end_mix};
  normalize_or_keep_zero(out.start);
  normalize_or_keep_zero(out.end);
  return out;
}

FeaturizerProvider::FeaturizerProvider(std::size_t dim, std::uint64_t seed)
    : dim_(dim), seed_(seed) {
  if (dim < 2) throw ConfigError("featurizer dim must be >= 2");
}

std::vector<BaseEmbedding> FeaturizerProvider::embed(std::span<const std::string> texts) {
  std::vector<BaseEmbedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(featurize(t, dim_, seed_));
  return out;
}

ProjectionHead ProjectionHead::identity(std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  return ProjectionHead{eye, eye, eye, eye};
}

ProjectionHead ProjectionHead::zeros(std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(d, d);
  return ProjectionHead{z, z, z, z};
}

void ProjectionHead::validate() const {
  const auto d = query_start.rows();
  for (const auto* m : {&query_start, &query_end, &phrase_start, &phrase_end}) {
    if (m->rows() != d || m->cols() != d) throw ConfigError("projection head must be d x d");
    if (!m->allFinite()) throw ConfigError("projection head has non-finite entries");
  }
  if (d < 2) throw ConfigError("projection head dim must be >= 2");
}

ProjectionHead& ProjectionHead::operator+=(const ProjectionHead& other) {
  query_start += other.query_start;
  query_end += other.query_end;
  phrase_start += other.phrase_start;
  phrase_end += other.phrase_end;
  return *this;
}

ProjectionHead& ProjectionHead::operator*=(double alpha) {
  query_start *= alpha;
  query_end *= alpha;
  phrase_start *= alpha;
  phrase_end *= alpha;
  return *this;
}

double ProjectionHead::squared_norm() const {
  return query_start.squaredNorm() + query_end.squaredNorm() + phrase_start.squaredNorm() +
         phrase_end.squaredNorm();
}

bool ProjectionHead::operator==(const ProjectionHead& other) const {
  auto same = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::equal(a.data(), a.data() + a.size(), b.data());
  };
  return same(query_start, other.query_start) && same(query_end, other.query_end) &&
         same(phrase_start, other.phrase_start) && same(phrase_end, other.phrase_end);
}

ProjectionHead operator*(double alpha, ProjectionHead head) {
  head *= alpha;
  return head;
}

void save_head(const ProjectionHead& head, const std::filesystem::path& path) {
  head.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write head file: " + path.string());
  out.write(kHeadMagic, sizeof(kHeadMagic));
  detail::write_le<std::uint32_t>(out, kHeadVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(head.dim()));
  for (const auto* m : {&head.query_start, &head.query_end, &head.phrase_start, &head.phrase_end}) {
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) detail::write_le<double>(out, (*m)(r, c));
    }
  }
  if (!out) throw Error("failed writing head file: " + path.string());
}

ProjectionHead load_head(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("head not found: " + path.string());
  char magic[sizeof(kHeadMagic)];
  if (!in.read(magic, sizeof(magic)) || !std::equal(magic, magic + sizeof(magic), kHeadMagic)) {
    throw FormatError("not a projection head file: " + path.string());
  }
  if (detail::read_le<std::uint32_t>(in, "version") != kHeadVersion) {
    throw FormatError("unsupported head file version");
  }
  const auto dim = detail::read_le<std::uint32_t>(in, "dim");
  if (dim < 2 || dim > 65536) throw FormatError("implausible head dim");
  auto head = ProjectionHead::zeros(dim);
  for (auto* m : {&head.query_start, &head.query_end, &head.phrase_start, &head.phrase_end}) {
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) (*m)(r, c) = detail::read_le<double>(in, "matrix");
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in head file");
  head.validate();
  return head;
}

QueryEmbedding project_query(const ProjectionHead& head, const BaseEmbedding& base) {
  check_dims(head, base);
  return {head.query_start * base.start, head.query_end * base.end};
}

PhraseEmbedding project_phrase(const ProjectionHead& head, const BaseEmbedding& base) {
  check_dims(head, base);
  return {head.phrase_start * base.start, head.phrase_end * base.end};
}

QueryEmbedding encode_context(const ConvContext& ctx, const ProjectionHead& head,
                              EncoderProvider& provider) {
  if (provider.dim() != head.dim()) {
    throw ConfigError("provider dim " + std::to_string(provider.dim()) + " != head dim " +
                      std::to_string(head.dim()));
  }
  std::vector<BaseEmbedding> base;
  try {
    base = provider.embed(std::span<const std::string>(&ctx.serialized_text, 1));
  } catch (const TransportError& e) {
    throw TransportError("encoding context " + ctx.id() + ": " + e.what());
  }
  if (base.size() != 1) throw ProtocolError("provider returned wrong embedding count");
  return project_query(head, base.front());
}

std::string compose_phrase_text(const PhraseSpan& span, const Passage& passage,
                                std::size_t window) {
  const auto& toks = passage.tokens;
  const std::size_t left_begin = span.start_token > window ? span.start_token - window : 0;
  const std::size_t right_end = std::min(toks.size(), span.end_token + 1 + window);
  std::string text;
  auto put = [&](std::string_view t) {
    if (!text.empty() && text.back() != ' ') text += ' ';
    text += t;
  };
  // first token, then the left window read outward from the span
  put(toks[span.start_token].text);
  for (std::size_t i = span.start_token; i > left_begin; --i) put(toks[i - 1].text);
  text += kSep;
  text += span.surface;
  text += kSep;
  // right window read inward toward the span, then the last token
  for (std::size_t i = right_end; i > span.end_token + 1; --i) put(toks[i - 1].text);
  put(toks[span.end_token].text);
  return text;
}

PhraseEmbedding encode_phrase(const PhraseSpan& span, const Passage& passage,
                              const ProjectionHead& head, EncoderProvider& provider) {
  if (provider.dim() != head.dim()) {
    throw ConfigError("provider dim " + std::to_string(provider.dim()) + " != head dim " +
                      std::to_string(head.dim()));
  }
  const std::string text = compose_phrase_text(span, passage);
  auto base = provider.embed(std::span<const std::string>(&text, 1));
  if (base.size() != 1) throw ProtocolError("provider returned wrong embedding count");
  return project_phrase(head, base.front());
}

}  // namespace phraseforge
