#include "gcl/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "gcl/error.hpp"
#include "gcl/numerics.hpp"

namespace gcl {

void LossWeights::validate() const {
  for (double w : {lambda_sup, lambda_gsl, lambda_drl}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ConfigError("loss weights must be finite and >= 0");
    }
  }
}

PoolingHead PoolingHead::init(std::size_t d_model, std::size_t d_proj,
                              std::size_t owner, std::uint64_t seed) {
  if (d_model == 0 || d_proj == 0) {
    throw ConfigError("pooling head dimensions must be positive");
  }
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  PoolingHead head;
  head.owner = owner;
  {
    const double bound = std::sqrt(6.0 / static_cast<double>(d_model + 1));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> q(d_model);
    for (double& x : q) x = dist(rng);
    head.query = Tensor({d_model}, std::move(q), true);
  }
  {
    const double bound = std::sqrt(6.0 / static_cast<double>(d_model + d_proj));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> w(d_model * d_proj);
    for (double& x : w) x = dist(rng);
    head.projection = Tensor({d_model, d_proj}, std::move(w), true);
  }
  return head;
}

DistributionPair DistributionPair::from_probs(std::vector<double> p_a,
                                              std::vector<double> p_b,
                                              double tau_a, double tau_b) {
  if (p_a.size() != p_b.size()) {
    throw ShapeError("distribution pair: lengths differ");
  }
  DistributionPair pair;
  pair.mixture.resize(p_a.size());
  for (std::size_t i = 0; i < p_a.size(); ++i) {
    pair.mixture[i] = (p_a[i] + p_b[i]) / 2.0;
  }
  pair.p_a = std::move(p_a);
  pair.p_b = std::move(p_b);
  pair.tau_a = tau_a;
  pair.tau_b = tau_b;
  pair.validate();
  return pair;
}

DistributionPair DistributionPair::from_logits(std::span<const double> z_a,
                                               std::span<const double> z_b,
                                               double tau_a, double tau_b) {
  return from_probs(softmax_temp(z_a, tau_a), softmax_temp(z_b, tau_b), tau_a,
                    tau_b);
}

void DistributionPair::validate() const {
  if (p_a.size() != p_b.size() || mixture.size() != p_a.size()) {
    throw ShapeError("distribution pair: lengths differ");
  }
  if (!(tau_a > 0.0) || !(tau_b > 0.0)) {
    throw DomainError("distribution pair: temperatures must be positive");
  }
  require_distribution(p_a, 1e-9, "P_A");
  require_distribution(p_b, 1e-9, "P_B");
}

std::vector<double> DistributionPair::cross_share() const {
  std::vector<double> v(p_a.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double denom = p_a[i] + p_b[i];
    v[i] = denom > 0.0 ? p_b[i] / denom : 0.5;
  }
  return v;
}

// --- supervised -------------------------------------------------------------

double supervised_loss(const Tensor& logits, std::span<const TokenId> labels,
                       const std::vector<bool>& mask) {
  const std::size_t rows = logits.rows();
  const std::size_t vocab = logits.cols();
  if (labels.size() != rows || mask.size() != rows) {
    throw ShapeError("supervised_loss: labels/mask must match logit rows");
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < rows; ++t) {
    if (!mask[t]) continue;
    if (labels[t] >= vocab) throw InputError("supervised_loss: label out of range");
    const auto row = logits.data().subspan(t * vocab, vocab);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double z : row) s += std::exp(z - mx);
    total += -(row[labels[t]] - mx - std::log(s));
    ++count;
  }
  if (count == 0) throw InputError("supervised_loss: mask selects no position");
  return total / static_cast<double>(count);
}

Var supervised_loss(Var logits, std::span<const std::size_t> rows,
                    std::span<const TokenId> labels) {
  if (rows.empty()) throw InputError("supervised_loss: mask selects no position");
  Var picked = ag::pick(ag::log_softmax_rows(ag::gather_rows(logits, rows)),
                        labels);
  return ag::scale(ag::mean(picked), -1.0);
}

// --- global semantic --------------------------------------------------------

std::vector<double> attention_pool(const Tensor& hidden, const PoolingHead& head) {
  if (hidden.rank() != 2 || hidden.rows() == 0) {
    throw InputError("attention_pool: hidden must be a non-empty L x d matrix");
  }
  const std::size_t len = hidden.rows();
  const std::size_t d = hidden.cols();
  if (head.query.size() != d) throw ShapeError("attention_pool: query width");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> scores(len);
  for (std::size_t l = 0; l < len; ++l) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += hidden[l * d + c] * head.query[c];
    scores[l] = s * inv_sqrt;
  }
  const auto alpha = softmax_temp(scores, 1.0);
  std::vector<double> z(d, 0.0);
  for (std::size_t l = 0; l < len; ++l)
    for (std::size_t c = 0; c < d; ++c) z[c] += alpha[l] * hidden[l * d + c];
  return z;
}

std::vector<double> project_normalize(std::span<const double> z,
                                      const PoolingHead& head) {
  const std::size_t d = head.projection.shape().at(0);
  const std::size_t dp = head.d_proj();
  if (z.size() != d) throw ShapeError("project_normalize: input width");
  std::vector<double> out(dp, 0.0);
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t j = 0; j < dp; ++j) out[j] += z[c] * head.projection[c * dp + j];
  double ss = 0.0;
  for (double x : out) ss += x * x;
  const double norm = std::sqrt(ss);
  if (!(norm > 1e-12)) {
    throw DegenerateInputError("project_normalize: projection has near-zero norm");
  }
  for (double& x : out) x /= norm;
  return out;
}

double gsl_loss(const std::vector<std::vector<double>>& zbar_a,
                const std::vector<std::vector<double>>& zbar_b, double tau,
                bool symmetric) {
  if (zbar_a.size() != zbar_b.size()) {
    throw ShapeError("gsl_loss: batch sizes " + std::to_string(zbar_a.size()) +
                     " and " + std::to_string(zbar_b.size()) + " differ");
  }
  if (zbar_a.empty()) throw InputError("gsl_loss: empty batch");
  if (!(tau > 0.0)) throw DomainError("gsl_loss: tau must be positive");
  const std::size_t n = zbar_a.size();
  std::vector<double> sim(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (zbar_a[i].size() != zbar_b[j].size()) {
        throw ShapeError("gsl_loss: vector widths differ");
      }
      double s = 0.0;
      for (std::size_t c = 0; c < zbar_a[i].size(); ++c) s += zbar_a[i][c] * zbar_b[j][c];
      sim[i * n + j] = s / tau;
    }
  }
  auto anchored = [&](bool a_anchor) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row(n);
      for (std::size_t j = 0; j < n; ++j) {
        row[j] = a_anchor ? sim[i * n + j] : sim[j * n + i];
      }
      const double mx = *std::max_element(row.begin(), row.end());
      double s = 0.0;
      for (double x : row) s += std::exp(x - mx);
      total += -(row[i] - mx - std::log(s));
    }
    return total / static_cast<double>(n);
  };
  const double forward = anchored(true);
  return symmetric ? 0.5 * (forward + anchored(false)) : forward;
}

Var gsl_loss(Var zbar_a, Var zbar_b, double tau, bool symmetric) {
  if (zbar_a.shape() != zbar_b.shape()) {
    throw ShapeError("gsl_loss: batch shapes " + shape_str(zbar_a.shape()) +
                     " and " + shape_str(zbar_b.shape()) + " differ");
  }
  if (!(tau > 0.0)) throw DomainError("gsl_loss: tau must be positive");
  const std::size_t n = zbar_a.shape().at(0);
  std::vector<std::size_t> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = i;
  Var sim = ag::scale(ag::matmul(zbar_a, ag::transpose(zbar_b)), 1.0 / tau);
  Var forward =
      ag::scale(ag::mean(ag::pick(ag::log_softmax_rows(sim), diag)), -1.0);
  if (!symmetric) return forward;
  Var backward = ag::scale(
      ag::mean(ag::pick(ag::log_softmax_rows(ag::transpose(sim)), diag)), -1.0);
  return ag::scale(ag::add(forward, backward), 0.5);
}

// --- distributional ---------------------------------------------------------

namespace {

struct DrlCoefficients {
  double a;
  double b;
};

DrlCoefficients drl_coefficients(double tau_a, double tau_b, bool scaled) {
  if (!scaled) return {0.5, 0.5};
  return {0.5 * tau_a * tau_a, 0.5 * tau_b * tau_b};
}

}  // namespace

double drl_loss(const DistributionPair& pair, bool scaled) {
  pair.validate();
  const auto [wa, wb] = drl_coefficients(pair.tau_a, pair.tau_b, scaled);
  return wa * kl_div(pair.p_a, pair.mixture) + wb * kl_div(pair.p_b, pair.mixture);
}

Var drl_loss(Var logits_a, Var logits_b, double tau_a, double tau_b,
             bool scaled, std::vector<double>* per_row, double* unscaled) {
  if (logits_a.shape() != logits_b.shape()) {
    throw ShapeError("drl_loss: logit blocks " + shape_str(logits_a.shape()) +
                     " and " + shape_str(logits_b.shape()) + " differ");
  }
  const auto [wa, wb] = drl_coefficients(tau_a, tau_b, scaled);
  Var pa = ag::floor_renorm_rows(ag::softmax_rows(logits_a, tau_a), kProbFloor);
  Var pb = ag::floor_renorm_rows(ag::softmax_rows(logits_b, tau_b), kProbFloor);
  Var log_m = ag::log(ag::scale(ag::add(pa, pb), 0.5));
  Var kl_a = ag::sum_rows(ag::mul(pa, ag::sub(ag::log(pa), log_m)));
  Var kl_b = ag::sum_rows(ag::mul(pb, ag::sub(ag::log(pb), log_m)));
  Var rows = ag::add(ag::scale(kl_a, wa), ag::scale(kl_b, wb));
  if (per_row != nullptr) {
    const auto v = rows.value().data();
    per_row->assign(v.begin(), v.end());
  }
  if (unscaled != nullptr) {
    const auto ka = kl_a.value().data();
    const auto kb = kl_b.value().data();
    double sum = 0.0;
    for (std::size_t i = 0; i < ka.size(); ++i) sum += 0.5 * ka[i] + 0.5 * kb[i];
    *unscaled = sum / static_cast<double>(ka.size());
  }
  return ag::mean(rows);
}

DrlGradient drl_grad_closed_form(std::span<const double> z_a,
                                 std::span<const double> z_b, double tau_a,
                                 double tau_b) {
  if (z_a.size() != z_b.size()) throw ShapeError("drl_grad: logit lengths differ");
  const auto pa = softmax_temp(z_a, tau_a);
  const auto pb = softmax_temp(z_b, tau_b);
  const std::size_t n = pa.size();

  // One side of the gradient; `self` is the differentiated model.
  auto side = [n](const std::vector<double>& self, const std::vector<double>& rival,
                  double tau_self, double tau_rival, std::vector<double>& grad,
                  std::vector<double>& alignment, std::vector<double>& shift) {
    std::vector<double> m(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = 0.5 * (self[i] + rival[i]);
      v[i] = rival[i] / (self[i] + rival[i]);
    }
    double kl = 0.0;
    double expected_v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      kl += self[i] * std::log(self[i] / m[i]);
      expected_v += self[i] * v[i];
    }
    const double shift_coeff =
        (tau_rival * tau_rival - tau_self * tau_self) / (2.0 * tau_self);
    grad.resize(n);
    alignment.resize(n);
    shift.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      alignment[i] = self[i] * (std::log(self[i] / m[i]) - kl);
      shift[i] = self[i] * (v[i] - expected_v);
      grad[i] = 0.5 * tau_self * alignment[i] - shift_coeff * shift[i];
    }
  };

  DrlGradient out;
  side(pa, pb, tau_a, tau_b, out.grad_a, out.alignment_a, out.shift_a);
  side(pb, pa, tau_b, tau_a, out.grad_b, out.alignment_b, out.shift_b);
  return out;
}

// --- group objective --------------------------------------------------------

TargetRows target_rows(const Batch& batch, const VocabSpec& vocab) {
  TargetRows out;
  std::size_t base = 0;
  for (const Example& ex : batch) {
    const auto mask = ex.loss_mask();
    const auto labels = ex.labels(vocab);
    for (std::size_t t = 0; t < mask.size(); ++t) {
      if (!mask[t]) continue;
      out.rows.push_back(base + t);
      out.labels.push_back(labels[t]);
    }
    base += mask.size();
  }
  return out;
}

MemberPass encode(Graph& graph, ModelParams& params, PoolingHead& head,
                  const Batch& batch, const VocabSpec& vocab) {
  std::vector<std::vector<TokenId>> sequences;
  sequences.reserve(batch.size());
  for (const Example& ex : batch) sequences.push_back(ex.inputs(vocab));
  MemberPass pass;
  pass.forward = forward(graph, params, sequences);
  const bool grads = graph.grad_enabled();
  Var query = grads ? graph.parameter(head.query) : graph.reference(head.query);
  Var projection =
      grads ? graph.parameter(head.projection) : graph.reference(head.projection);
  Var pooled = ag::attention_pool(pass.forward.hidden, query, pass.forward.segments);
  pass.semantic = ag::l2_normalize_rows(ag::matmul(pooled, projection));
  return pass;
}

GcoResult gco_loss(const MemberPass& a, const MemberPass& b, const Batch& batch,
                   const VocabSpec& vocab, const GcoOptions& options) {
  options.weights.validate();
  if (a.forward.segments != b.forward.segments) {
    throw InputError("gco_loss: members were not run on the same batch");
  }
  const auto targets = target_rows(batch, vocab);
  GcoResult out;
  out.sup_a = supervised_loss(a.forward.logits, targets.rows, targets.labels);
  out.sup_b = supervised_loss(b.forward.logits, targets.rows, targets.labels);
  out.gsl = gsl_loss(a.semantic, b.semantic, options.tau_gsl, options.symmetric_gsl);
  out.drl = drl_loss(ag::gather_rows(a.forward.logits, targets.rows),
                     ag::gather_rows(b.forward.logits, targets.rows),
                     options.tau_a, options.tau_b, options.scaled_drl,
                     &out.breakdown.drl_per_position, &out.breakdown.drl_unscaled);

  const LossWeights& w = options.weights;
  out.total = ag::add(
      ag::add(ag::scale(ag::add(out.sup_a, out.sup_b), w.lambda_sup),
              ag::scale(out.gsl, w.lambda_gsl)),
      ag::scale(out.drl, w.lambda_drl));

  LossBreakdown& bd = out.breakdown;
  bd.weights = w;
  bd.sup_a = out.sup_a.value().item();
  bd.sup_b = out.sup_b.value().item();
  bd.gsl = out.gsl.value().item();
  bd.drl = out.drl.value().item();
  bd.total = out.total.value().item();
  return out;
}

}  // namespace gcl
