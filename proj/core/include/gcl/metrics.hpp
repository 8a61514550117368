#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gcl/model.hpp"

namespace gcl {

// Deterministic surrogate token embedder: one unit vector per token id.
class EmbedderSpec {
 public:
  // Gaussian directions drawn from a generator keyed by (seed, token id), so a
  // token's vector does not depend on the vocabulary size.
  static EmbedderSpec seeded(std::size_t vocab, std::size_t dim, std::uint64_t seed);
  // Standard basis vectors: distinct tokens are mutually orthogonal.
  static EmbedderSpec one_hot(std::size_t vocab);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t vocab() const noexcept { return vocab_; }
  std::uint64_t seed() const noexcept { return seed_; }
  // Throws InputError for ids outside the vocabulary.
  std::span<const double> embed(TokenId id) const;

 private:
  std::size_t vocab_ = 0;
  std::size_t dim_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<double> table_;
};

// Cosine of two tokens' embeddings; exactly 1 for equal ids.
double token_cosine(TokenId a, TokenId b, const EmbedderSpec& emb);

struct F1Score {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Greedy max-cosine matching with per-pair cosines clamped to [0, 1]:
//   R = mean over reference tokens g_k of max_j cos(y_j, g_k)
//   P = mean over output tokens y_j of max_k cos(y_j, g_k)
//   F1 = 2PR / (P + R), or 0 when P + R = 0.
// Throws InputError when either sequence is empty.
F1Score token_f1(std::span<const TokenId> output, std::span<const TokenId> reference,
                 const EmbedderSpec& emb);

// Cosine of mean-pooled token embeddings. Throws InputError for empty input
// and DegenerateInputError when a pooled vector has zero norm.
double sentence_cos(std::span<const TokenId> output, std::span<const TokenId> reference,
                    const EmbedderSpec& emb);

// Perception, reasoning and action fields of a target-formatted sequence:
//   <perc> ... <reason> ... <act> ... [eos]
struct OutputFields {
  std::vector<TokenId> perception;
  std::vector<TokenId> reasoning;
  std::vector<TokenId> action;
  bool ok = false;
  std::string problem;
};

OutputFields parse_fields(std::span<const TokenId> tokens, const VocabSpec& vocab);

struct SampleScore {
  F1Score action;
  double perception_cos = 0.0;
  double reasoning_cos = 0.0;
  bool failed = false;
  std::string diagnostic;
};

struct MetricsRow {
  std::string model_id;
  std::size_t epoch = 0;
  double action_f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double perception_cos = 0.0;
  double reasoning_cos = 0.0;
  std::size_t samples = 0;
  std::size_t failed = 0;

  bool operator==(const MetricsRow&) const = default;
};

// Scores one generated sequence against the example's reference target.
// Malformed output scores zero and is flagged rather than thrown.
SampleScore score_sample(std::span<const TokenId> generated, const Example& reference,
                         const VocabSpec& vocab, const EmbedderSpec& emb);

// Greedy generation per sample. Precision, recall and the cosines are averaged
// in sample order; action_f1 is the harmonic mean of the averaged P and R. Throws
// InputError for an empty test set. per_sample, when non-null, receives the
// individual scores.
MetricsRow evaluate_model(const ModelParams& params, std::span<const Example> test_set,
                          const VocabSpec& vocab, const EmbedderSpec& emb,
                          std::vector<SampleScore>* per_sample = nullptr);

}  // namespace gcl
