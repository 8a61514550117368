#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gcl/tensor.hpp"

namespace gcl {

// Linear warmup to eta_peak over the first warmup_ratio * total_steps steps,
// then half-cosine decay to zero at total_steps.
struct ScheduleConfig {
  double eta_peak = 1e-5;
  std::size_t total_steps = 1;
  double warmup_ratio = 0.1;

  void validate() const;
};

// Throws UsageError for t > total_steps.
double lr_schedule(std::size_t t, const ScheduleConfig& cfg);

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  bool operator==(const AdamWHyper&) const = default;
};

// First/second moments for one model's parameter subspace. Moments are laid
// out in the order of the tensor list the state was created for.
struct OptimizerState {
  AdamWHyper hyper;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static OptimizerState for_params(std::span<const Tensor* const> params,
                                   AdamWHyper hyper = {});
  std::size_t numel() const;
};

// One decoupled-weight-decay Adam update using each tensor's grad():
//   p <- p - eta * wd * p - eta * m_hat / (sqrt(v_hat) + eps)
// Throws UsageError when the tensor list does not match the state layout.
void adamw_step(OptimizerState& state, std::span<Tensor* const> params,
                double eta);

// Global L2 norm of all gradients.
double grad_norm(std::span<Tensor* const> params);
// Rescales gradients to norm max_norm when above it; returns the pre-clip norm.
double clip_grad_norm(std::span<Tensor* const> params, double max_norm);

void zero_grads(std::span<Tensor* const> params);

}  // namespace gcl
