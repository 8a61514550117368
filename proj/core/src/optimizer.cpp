#include "gcl/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "gcl/error.hpp"

namespace gcl {

void ScheduleConfig::validate() const {
  if (total_steps < 1) throw ConfigError("schedule: total_steps must be >= 1");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) {
    throw ConfigError("schedule: warmup_ratio must lie in [0, 1)");
  }
  if (!(eta_peak >= 0.0) || !std::isfinite(eta_peak)) {
    throw ConfigError("schedule: eta_peak must be finite and >= 0");
  }
}

double lr_schedule(std::size_t t, const ScheduleConfig& cfg) {
  cfg.validate();
  if (t > cfg.total_steps) {
    throw UsageError("lr_schedule: step " + std::to_string(t) +
                     " beyond horizon " + std::to_string(cfg.total_steps));
  }
  const double total = static_cast<double>(cfg.total_steps);
  const double warmup = cfg.warmup_ratio * total;
  const double step = static_cast<double>(t);
  if (step < warmup) return cfg.eta_peak * step / warmup;
  const double progress = (step - warmup) / (total - warmup);
  return cfg.eta_peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

OptimizerState OptimizerState::for_params(std::span<const Tensor* const> params,
                                          AdamWHyper hyper) {
  OptimizerState state;
  state.hyper = hyper;
  for (const Tensor* p : params) {
    state.m.emplace_back(p->size(), 0.0);
    state.v.emplace_back(p->size(), 0.0);
  }
  return state;
}

std::size_t OptimizerState::numel() const {
  std::size_t n = 0;
  for (const auto& block : m) n += block.size();
  return n;
}

void adamw_step(OptimizerState& state, std::span<Tensor* const> params,
                double eta) {
  if (params.size() != state.m.size()) {
    throw UsageError("adamw_step: " + std::to_string(params.size()) +
                     " tensors for a state of " + std::to_string(state.m.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->size() != state.m[k].size() ||
        params[k]->grad().size() != params[k]->size()) {
      throw UsageError("adamw_step: tensor " + std::to_string(k) +
                       " does not match its moment buffers");
    }
  }
  const AdamWHyper& h = state.hyper;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(h.beta1, t);
  const double bias2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k]->data();
    const auto g = params[k]->grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p[i] -= eta * h.weight_decay * p[i];
      p[i] -= eta * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
}

double grad_norm(std::span<Tensor* const> params) {
  double ss = 0.0;
  for (const Tensor* p : params) {
    for (double g : p->grad()) ss += g * g;
  }
  return std::sqrt(ss);
}

double clip_grad_norm(std::span<Tensor* const> params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (Tensor* p : params) {
      for (double& g : p->grad()) g *= factor;
    }
  }
  return norm;
}

void zero_grads(std::span<Tensor* const> params) {
  for (Tensor* p : params) p->zero_grad();
}

}  // namespace gcl
