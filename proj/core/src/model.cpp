#include "gcl/model.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <random>
#include <string>

#include "gcl/error.hpp"
#include "gcl/hash.hpp"

namespace gcl {

void VocabSpec::validate() const {
  const TokenId specials[] = {pad, bos, eos, perc, reason, act};
  for (std::size_t i = 0; i < std::size(specials); ++i) {
    if (specials[i] >= size) {
      throw ConfigError("vocab: special ids must be below vocab size");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (specials[i] == specials[j]) {
        throw ConfigError("vocab: special ids must be distinct");
      }
    }
  }
  if (visual_count == 0 || visual_offset + visual_count > size) {
    throw ConfigError("vocab: visual token range exceeds vocab size");
  }
  for (TokenId special : specials) {
    if (is_visual(special)) {
      throw ConfigError("vocab: special id inside the visual token range");
    }
  }
}

void ModelConfig::validate() const {
  if (layers == 0 || d_model == 0 || heads == 0 || vocab == 0 || max_seq_len == 0 ||
      ffn_mult == 0) {
    throw ConfigError("model: dimensions must be positive");
  }
  if (d_model % heads != 0) {
    throw ConfigError("model: d_model " + std::to_string(d_model) +
                      " not divisible by " + std::to_string(heads) + " heads");
  }
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out{&embedding};
  for (auto& layer : layers) {
    for (Tensor* t : {&layer.wq, &layer.wk, &layer.wv, &layer.wo, &layer.w1,
                      &layer.b1, &layer.w2, &layer.b2}) {
      out.push_back(t);
    }
  }
  if (!config.tie_output) out.push_back(&output);
  return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
  auto mut = const_cast<ModelParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

std::size_t per_layer_capacity(const ModelConfig& c) {
  const std::size_t d = c.d_model;
  const std::size_t f = c.ffn_mult * d;
  return 4 * d * d + d * f + f + f * d + d;
}

std::size_t capacity(const ModelConfig& c) {
  const std::size_t io = c.tie_output ? c.vocab * c.d_model
                                      : 2 * c.vocab * c.d_model;
  return io + c.layers * per_layer_capacity(c);
}

std::size_t capacity(const ModelParams& params) {
  std::size_t total = 0;
  for (const Tensor* t : params.tensors()) total += t->size();
  return total;
}

namespace {

Tensor uniform_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> data(rows * cols);
  for (double& x : data) x = dist(rng);
  return Tensor({rows, cols}, std::move(data), true);
}

// Fixed sinusoidal position code for rows laid out by `segments`.
Tensor positional_codes(const Segments& segments, std::size_t d) {
  const std::size_t rows = segments.back();
  Tensor out = Tensor::zeros({rows, d});
  auto ov = out.data();
  for (std::size_t s = 0; s + 1 < segments.size(); ++s) {
    for (std::size_t r = segments[s]; r < segments[s + 1]; ++r) {
      const double pos = static_cast<double>(r - segments[s]);
      for (std::size_t i = 0; i < d; i += 2) {
        const double freq =
            std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
        ov[r * d + i] = std::sin(pos * freq);
        if (i + 1 < d) ov[r * d + i + 1] = std::cos(pos * freq);
      }
    }
  }
  return out;
}

}  // namespace

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config.d_model;
  const std::size_t f = config.ffn_mult * d;
  ModelParams params;
  params.config = config;
  params.seed = seed;
  params.embedding = uniform_matrix(config.vocab, d, rng);
  params.layers.resize(config.layers);
  for (auto& layer : params.layers) {
    layer.wq = uniform_matrix(d, d, rng);
    layer.wk = uniform_matrix(d, d, rng);
    layer.wv = uniform_matrix(d, d, rng);
    layer.wo = uniform_matrix(d, d, rng);
    layer.w1 = uniform_matrix(d, f, rng);
    layer.b1 = Tensor::zeros({f}, true);
    layer.w2 = uniform_matrix(f, d, rng);
    layer.b2 = Tensor::zeros({d}, true);
  }
  if (!config.tie_output) params.output = uniform_matrix(d, config.vocab, rng);
  return params;
}

std::uint64_t param_checksum(const ModelParams& params) {
  std::uint64_t h = kFnvOffset;
  for (const Tensor* t : params.tensors()) {
    h = fnv1a64(std::as_bytes(t->data()), h);
  }
  return h;
}

std::vector<TokenId> Example::prefix(const VocabSpec& vocab) const {
  std::vector<TokenId> out;
  out.reserve(1 + visual_tokens.size() + text_tokens.size());
  out.push_back(vocab.bos);
  out.insert(out.end(), visual_tokens.begin(), visual_tokens.end());
  out.insert(out.end(), text_tokens.begin(), text_tokens.end());
  return out;
}

std::vector<TokenId> Example::inputs(const VocabSpec& vocab) const {
  std::vector<TokenId> out = prefix(vocab);
  if (!target_tokens.empty()) {
    out.insert(out.end(), target_tokens.begin(), target_tokens.end() - 1);
  }
  return out;
}

std::vector<TokenId> Example::labels(const VocabSpec& vocab) const {
  const std::size_t n_prefix = 1 + visual_tokens.size() + text_tokens.size();
  const std::size_t n_inputs = n_prefix + target_tokens.size() -
                               (target_tokens.empty() ? 0 : 1);
  std::vector<TokenId> out(n_inputs, vocab.pad);
  for (std::size_t i = 0; i < target_tokens.size(); ++i) {
    out[n_prefix - 1 + i] = target_tokens[i];
  }
  return out;
}

std::vector<bool> Example::loss_mask() const {
  const std::size_t n_prefix = 1 + visual_tokens.size() + text_tokens.size();
  const std::size_t n_inputs = n_prefix + target_tokens.size() -
                               (target_tokens.empty() ? 0 : 1);
  std::vector<bool> mask(n_inputs, false);
  for (std::size_t i = 0; i < target_tokens.size(); ++i) mask[n_prefix - 1 + i] = true;
  return mask;
}

GraphForward forward(Graph& graph, ModelParams& params,
                     std::span<const std::vector<TokenId>> sequences) {
  const ModelConfig& cfg = params.config;
  if (sequences.empty()) throw InputError("forward: empty batch");
  Segments segments{0};
  std::vector<TokenId> ids;
  for (const auto& seq : sequences) {
    if (seq.empty()) throw InputError("forward: empty sequence");
    if (seq.size() > cfg.max_seq_len) {
      throw InputError("forward: sequence length " + std::to_string(seq.size()) +
                       " exceeds max " + std::to_string(cfg.max_seq_len));
    }
    for (TokenId id : seq) {
      if (id >= cfg.vocab) {
        throw InputError("forward: token id " + std::to_string(id) +
                         " out of range " + std::to_string(cfg.vocab));
      }
    }
    ids.insert(ids.end(), seq.begin(), seq.end());
    segments.push_back(ids.size());
  }

  const bool grads = graph.grad_enabled();
  auto bind = [&](Tensor& t) {
    return grads ? graph.parameter(t) : graph.reference(t);
  };

  Var embedding = bind(params.embedding);
  Var x = ag::add(ag::gather_rows(embedding, ids),
                  graph.constant(positional_codes(segments, cfg.d_model)));
  for (auto& layer : params.layers) {
    Var h = ag::rms_norm_rows(x);
    Var q = ag::matmul(h, bind(layer.wq));
    Var k = ag::matmul(h, bind(layer.wk));
    Var v = ag::matmul(h, bind(layer.wv));
    Var attn = ag::causal_attention(q, k, v, segments, cfg.heads);
    x = ag::add(x, ag::matmul(attn, bind(layer.wo)));
    Var h2 = ag::rms_norm_rows(x);
    Var inner = ag::gelu(ag::add_bias(ag::matmul(h2, bind(layer.w1)),
                                      bind(layer.b1)));
    x = ag::add(x, ag::add_bias(ag::matmul(inner, bind(layer.w2)),
                                bind(layer.b2)));
  }
  Var hidden = ag::rms_norm_rows(x);
  Var projection =
      cfg.tie_output ? ag::transpose(embedding) : bind(params.output);
  Var logits = ag::matmul(hidden, projection);
  return {hidden, logits, std::move(segments)};
}

ForwardOutput forward(const ModelParams& params, std::span<const TokenId> ids) {
  Graph graph(false);
  std::vector<std::vector<TokenId>> seqs{{ids.begin(), ids.end()}};
  // A no-grad graph only reads the parameters.
  auto out = forward(graph, const_cast<ModelParams&>(params), seqs);
  return {out.hidden.value(), out.logits.value()};
}

ForwardOutput forward(const ModelParams& params, const Example& example,
                      const VocabSpec& vocab) {
  return forward(params, example.inputs(vocab));
}

std::vector<TokenId> generate(const ModelParams& params, const Example& prompt,
                              const VocabSpec& vocab, std::size_t max_len) {
  if (max_len == 0) throw UsageError("generate: max_len must be >= 1");
  std::vector<TokenId> seq = prompt.prefix(vocab);
  std::vector<TokenId> emitted;
  const std::size_t v = params.config.vocab;
  while (emitted.size() < max_len && seq.size() < params.config.max_seq_len) {
    Graph graph(false);
    std::vector<std::vector<TokenId>> seqs{seq};
    auto out = forward(graph, const_cast<ModelParams&>(params), seqs);
    const auto logits = out.logits.value().data();
    const double* last = logits.data() + (seq.size() - 1) * v;
    const TokenId next =
        static_cast<TokenId>(std::max_element(last, last + v) - last);
    emitted.push_back(next);
    seq.push_back(next);
    if (next == vocab.eos) break;
  }
  return emitted;
}

}  // namespace gcl
