// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "phraseforge/corpus.hpp"

namespace phraseforge {

inline constexpr std::size_t kDefaultDim = 64;
inline constexpr std::size_t kPhraseContextWindow = 10;

/// Pre-projection (start, end) features of one text.
struct BaseEmbedding {
  Eigen::VectorXd start;
  Eigen::VectorXd end;

  std::size_t dim() const { return static_cast<std::size_t>(start.size()); }
};

/// Unnormalized pieces of the built-in featurizer, exposed for inspection.
struct FeatureParts {
  Eigen::VectorXd bag;
  Eigen::VectorXd start_mix;
  Eigen::VectorXd end_mix;
};

/// Weights of the featurizer recipe. A token at position j of n adds
/// kPositionDecay^j to the start mix and kPositionDecay^(n-1-j) to the end mix;
/// both mixes are scaled by kBoundaryWeight before being added to the bag.
inline constexpr double kPositionDecay = 0.8;
inline constexpr double kBoundaryWeight = 3.0;

FeatureParts featurize_parts(std::string_view text, std::size_t dim, std::uint64_t seed);

/// Hashed bag-of-tokens with boundary mixing; each vector is L2-normalized
/// unless its norm is zero, in which case it stays zero.
BaseEmbedding featurize(std::string_view text, std::size_t dim, std::uint64_t seed);

/// Source of base embeddings. Implementations must return exactly one
/// embedding per input text, in input order, all of dimension dim().
class EncoderProvider {
 public:
  virtual ~EncoderProvider() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<BaseEmbedding> embed(std::span<const std::string> texts) = 0;
};

class FeaturizerProvider final : public EncoderProvider {
 public:
  FeaturizerProvider(std::size_t dim, std::uint64_t seed);

  std::size_t dim() const override { return dim_; }
  std::vector<BaseEmbedding> embed(std::span<const std::string> texts) override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Four trainable d x d maps applied on top of frozen base features.
struct ProjectionHead {
  Eigen::MatrixXd query_start;
  Eigen::MatrixXd query_end;
  Eigen::MatrixXd phrase_start;
  Eigen::MatrixXd phrase_end;

  static ProjectionHead identity(std::size_t dim);
  static ProjectionHead zeros(std::size_t dim);

  std::size_t dim() const { return static_cast<std::size_t>(query_start.rows()); }

  /// Throws ConfigError unless all four matrices are square, equal-sized and finite.
  void validate() const;

  ProjectionHead& operator+=(const ProjectionHead& other);
  ProjectionHead& operator*=(double alpha);
  double squared_norm() const;

  bool operator==(const ProjectionHead& other) const;
};

ProjectionHead operator*(double alpha, ProjectionHead head);

void save_head(const ProjectionHead& head, const std::filesystem::path& path);
ProjectionHead load_head(const std::filesystem::path& path);

/// Post-projection embedding; used for both query and phrase sides.
struct DualVector {
  Eigen::VectorXd start;
  Eigen::VectorXd end;

  std::size_t dim() const { return static_cast<std::size_t>(start.size()); }
};

using QueryEmbedding = DualVector;
using PhraseEmbedding = DualVector;

QueryEmbedding project_query(const ProjectionHead& head, const BaseEmbedding& base);
PhraseEmbedding project_phrase(const ProjectionHead& head, const BaseEmbedding& base);

QueryEmbedding encode_context(const ConvContext& ctx, const ProjectionHead& head,
                              EncoderProvider& provider);

/// Text fed to the provider for a phrase. It opens with the span's first
/// token followed by up to `window` left-context tokens read outward, carries
/// the surface in the middle, and closes with up to `window` right-context
/// tokens read inward followed by the span's last token. The featurizer's
/// start mix thus sees the start boundary and its left neighbours, and the
/// end mix the end boundary and its right neighbours.
std::string compose_phrase_text(const PhraseSpan& span, const Passage& passage,
                                std::size_t window = kPhraseContextWindow);

PhraseEmbedding encode_phrase(const PhraseSpan& span, const Passage& passage,
                              const ProjectionHead& head, EncoderProvider& provider);

}  // namespace phraseforge
