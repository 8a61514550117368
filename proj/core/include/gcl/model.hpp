#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gcl/graph.hpp"
#include "gcl/tensor.hpp"

namespace gcl {

using TokenId = std::size_t;

// Token layout shared by both group members. Visual cell codes occupy the
// contiguous range [visual_offset, visual_offset + visual_count).
struct VocabSpec {
  std::size_t size = 128;
  TokenId pad = 0;
  TokenId bos = 1;
  TokenId eos = 2;
  // Section markers opening the perception, reasoning and action fields.
  TokenId perc = 3;
  TokenId reason = 4;
  TokenId act = 5;
  TokenId visual_offset = 8;
  std::size_t visual_count = 6;

  void validate() const;
  bool is_visual(TokenId id) const {
    return id >= visual_offset && id < visual_offset + visual_count;
  }
};

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t vocab = 128;
  std::size_t max_seq_len = 96;
  std::size_t ffn_mult = 4;
  // Reuse the embedding table as the output projection.
  bool tie_output = false;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct TransformerLayer {
  Tensor wq, wk, wv, wo;  // d x d
  Tensor w1;              // d x (ffn_mult d)
  Tensor b1;              // ffn_mult d
  Tensor w2;              // (ffn_mult d) x d
  Tensor b2;              // d
};

struct ModelParams {
  ModelConfig config;
  std::uint64_t seed = 0;
  Tensor embedding;  // vocab x d
  std::vector<TransformerLayer> layers;
  Tensor output;  // d x vocab; empty when tied

  // Trainable tensors in a fixed canonical order (checkpoints, optimizer).
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
};

// Scalar count of every trainable entry, from the analytic formula.
std::size_t capacity(const ModelConfig& config);
std::size_t per_layer_capacity(const ModelConfig& config);
// Scalar count of every trainable entry actually held by params.
std::size_t capacity(const ModelParams& params);

// Deterministic scaled-uniform initialisation: weights ~ U(+-sqrt(6/(fan_in +
// fan_out))), biases zero. Throws ConfigError for invalid configs.
ModelParams init_model(const ModelConfig& config, std::uint64_t seed);

// Order-sensitive FNV-1a over the raw parameter bytes.
std::uint64_t param_checksum(const ModelParams& params);

// One teacher-forced training sequence: [bos] visual text target.
struct Example {
  std::vector<TokenId> visual_tokens;
  std::vector<TokenId> text_tokens;
  std::vector<TokenId> target_tokens;

  // bos + visual + text
  std::vector<TokenId> prefix(const VocabSpec& vocab) const;
  // prefix + target without its final token; row t predicts token t + 1.
  std::vector<TokenId> inputs(const VocabSpec& vocab) const;
  // Next-token label per input row; meaningful only where loss_mask is true.
  std::vector<TokenId> labels(const VocabSpec& vocab) const;
  // True exactly on rows whose next token is a target token.
  std::vector<bool> loss_mask() const;
  std::size_t sequence_length() const {
    return 1 + visual_tokens.size() + text_tokens.size() + target_tokens.size();
  }
};

using Batch = std::vector<Example>;

// Plain (graph-free) forward result for one sequence.
struct ForwardOutput {
  Tensor hidden;  // L x d, final normalised pre-projection states
  Tensor logits;  // L x vocab
};

// Forward nodes of a stacked batch inside a graph.
struct GraphForward {
  Var hidden;
  Var logits;
  Segments segments;
};

// Binds params into graph (differentiable when the graph records gradients)
// and runs every sequence as an independent causal segment.
GraphForward forward(Graph& graph, ModelParams& params,
                     std::span<const std::vector<TokenId>> sequences);

// Inference forward of a single token sequence.
ForwardOutput forward(const ModelParams& params, std::span<const TokenId> ids);
ForwardOutput forward(const ModelParams& params, const Example& example,
                      const VocabSpec& vocab);

// Greedy argmax decoding from the example's prefix (its targets are ignored).
// Emits at most max_len tokens, stopping after eos or at max_seq_len.
std::vector<TokenId> generate(const ModelParams& params, const Example& prompt,
                              const VocabSpec& vocab, std::size_t max_len);

}  // namespace gcl
