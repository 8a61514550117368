#include "gcl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gcl/error.hpp"
#include "gcl/hash.hpp"

namespace gcl {

EmbedderSpec EmbedderSpec::seeded(std::size_t vocab, std::size_t dim,
                                  std::uint64_t seed) {
  if (vocab == 0 || dim == 0) throw ConfigError("embedder: vocab and dim must be positive");
  EmbedderSpec e;
  e.vocab_ = vocab;
  e.dim_ = dim;
  e.seed_ = seed;
  e.table_.resize(vocab * dim);
  for (std::size_t id = 0; id < vocab; ++id) {
    const std::uint64_t key[2] = {seed, id};
    std::mt19937_64 rng(fnv1a64(std::as_bytes(std::span(key))));
    std::normal_distribution<double> normal(0.0, 1.0);
    double* row = e.table_.data() + id * dim;
    double norm = 0.0;
    do {
      norm = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        row[i] = normal(rng);
        norm += row[i] * row[i];
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < dim; ++i) row[i] /= norm;
  }
  return e;
}

EmbedderSpec EmbedderSpec::one_hot(std::size_t vocab) {
  if (vocab == 0) throw ConfigError("embedder: vocab must be positive");
  EmbedderSpec e;
  e.vocab_ = vocab;
  e.dim_ = vocab;
  e.table_.assign(vocab * vocab, 0.0);
  for (std::size_t id = 0; id < vocab; ++id) e.table_[id * vocab + id] = 1.0;
  return e;
}

std::span<const double> EmbedderSpec::embed(TokenId id) const {
  if (id >= vocab_) {
    throw InputError("embedder: token " + std::to_string(id) + " outside vocabulary of " +
                     std::to_string(vocab_));
  }
  return {table_.data() + id * dim_, dim_};
}

double token_cosine(TokenId a, TokenId b, const EmbedderSpec& emb) {
  const auto x = emb.embed(a);
  const auto y = emb.embed(b);
  if (a == b) return 1.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
  return dot;
}

F1Score token_f1(std::span<const TokenId> output, std::span<const TokenId> reference,
                 const EmbedderSpec& emb) {
  if (output.empty() || reference.empty()) {
    throw InputError("token_f1: sequences must be nonempty");
  }
  const std::size_t n = output.size();
  const std::size_t m = reference.size();
  std::vector<double> cos(n * m);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < m; ++k) {
      cos[j * m + k] = std::clamp(token_cosine(output[j], reference[k], emb), 0.0, 1.0);
    }
  }
  // Per-token maxima are summed in sorted order so the means do not depend on
  // token order.
  std::vector<double> p_best(n), r_best(m, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    p_best[j] = *std::max_element(cos.begin() + j * m, cos.begin() + (j + 1) * m);
    for (std::size_t k = 0; k < m; ++k) r_best[k] = std::max(r_best[k], cos[j * m + k]);
  }
  std::sort(p_best.begin(), p_best.end());
  std::sort(r_best.begin(), r_best.end());
  const double p_sum = std::accumulate(p_best.begin(), p_best.end(), 0.0);
  const double r_sum = std::accumulate(r_best.begin(), r_best.end(), 0.0);
  F1Score s;
  s.precision = p_sum / static_cast<double>(n);
  s.recall = r_sum / static_cast<double>(m);
  const double denom = s.precision + s.recall;
  s.f1 = denom > 0.0 ? 2.0 * s.precision * s.recall / denom : 0.0;
  return s;
}

namespace {

std::vector<double> mean_pool(std::span<const TokenId> tokens, const EmbedderSpec& emb) {
  std::vector<double> pooled(emb.dim(), 0.0);
  for (TokenId t : tokens) {
    const auto e = emb.embed(t);
    for (std::size_t i = 0; i < pooled.size(); ++i) pooled[i] += e[i];
  }
  for (double& x : pooled) x /= static_cast<double>(tokens.size());
  return pooled;
}

}  // namespace

double sentence_cos(std::span<const TokenId> output, std::span<const TokenId> reference,
                    const EmbedderSpec& emb) {
  if (output.empty() || reference.empty()) {
    throw InputError("sentence_cos: sequences must be nonempty");
  }
  const auto a = mean_pool(output, emb);
  const auto b = mean_pool(reference, emb);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw DegenerateInputError("sentence_cos: zero-norm pooled embedding");
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

OutputFields parse_fields(std::span<const TokenId> tokens, const VocabSpec& vocab) {
  OutputFields f;
  auto end = std::find(tokens.begin(), tokens.end(), vocab.eos);
  const auto find = [&](TokenId marker) { return std::find(tokens.begin(), end, marker); };
  const auto perc = find(vocab.perc);
  const auto reason = find(vocab.reason);
  const auto act = find(vocab.act);
  if (perc == end || reason == end || act == end) {
    f.problem = "missing section marker";
    return f;
  }
  if (!(perc < reason && reason < act)) {
    f.problem = "section markers out of order";
    return f;
  }
  f.perception.assign(perc + 1, reason);
  f.reasoning.assign(reason + 1, act);
  f.action.assign(act + 1, end);
  if (f.perception.empty() || f.reasoning.empty() || f.action.empty()) {
    f.problem = "empty section";
    return f;
  }
  f.ok = true;
  return f;
}

SampleScore score_sample(std::span<const TokenId> generated, const Example& reference,
                         const VocabSpec& vocab, const EmbedderSpec& emb) {
  const OutputFields ref = parse_fields(reference.target_tokens, vocab);
  if (!ref.ok) throw InputError("evaluate: reference target malformed: " + ref.problem);
  SampleScore s;
  const OutputFields out = parse_fields(generated, vocab);
  if (!out.ok) {
    s.failed = true;
    s.diagnostic = out.problem;
    return s;
  }
  try {
    s.action = token_f1(out.action, ref.action, emb);
    s.perception_cos = sentence_cos(out.perception, ref.perception, emb);
    s.reasoning_cos = sentence_cos(out.reasoning, ref.reasoning, emb);
  } catch (const InputError& e) {
    s = SampleScore{};
    s.failed = true;
    s.diagnostic = e.what();
  }
  return s;
}

MetricsRow evaluate_model(const ModelParams& params, std::span<const Example> test_set,
                          const VocabSpec& vocab, const EmbedderSpec& emb,
                          std::vector<SampleScore>* per_sample) {
  if (test_set.empty()) throw InputError("evaluate_model: empty test set");
  MetricsRow row;
  row.samples = test_set.size();
  if (per_sample != nullptr) per_sample->clear();
  for (const Example& ex : test_set) {
    const std::size_t prefix = ex.prefix(vocab).size();
    if (prefix >= params.config.max_seq_len) {
      throw InputError("evaluate_model: prompt fills the context window");
    }
    const auto generated = generate(params, ex, vocab, params.config.max_seq_len - prefix);
    SampleScore s = score_sample(generated, ex, vocab, emb);
    row.precision += s.action.precision;
    row.recall += s.action.recall;
    row.perception_cos += s.perception_cos;
    row.reasoning_cos += s.reasoning_cos;
    row.failed += s.failed ? 1 : 0;
    if (per_sample != nullptr) per_sample->push_back(std::move(s));
  }
  const double n = static_cast<double>(test_set.size());
  row.precision /= n;
  row.recall /= n;
  const double denom = row.precision + row.recall;
  row.action_f1 = denom > 0.0 ? 2.0 * row.precision * row.recall / denom : 0.0;
  row.perception_cos /= n;
  row.reasoning_cos /= n;
  return row;
}

}  // namespace gcl
