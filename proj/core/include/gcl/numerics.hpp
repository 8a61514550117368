#pragma once

#include <span>
#include <vector>

#include "gcl/tensor.hpp"

namespace gcl {

// Floor applied to probabilities before any logarithm.
inline constexpr double kProbFloor = 1e-12;

// Softmax of logits / tau with max-subtraction. Throws DomainError for
// tau <= 0 and InputError for non-finite logits.
std::vector<double> softmax_temp(std::span<const double> logits, double tau);
inline std::vector<double> softmax_temp(const Tensor& logits, double tau) {
  return softmax_temp(logits.data(), tau);
}

// Clamps entries to >= eps and renormalises. Vectors with no entry below eps
// are returned unchanged.
std::vector<double> floor_renormalize(std::span<const double> p,
                                      double eps = kProbFloor);

// KL(P || Q) in nats after eps-flooring both arguments. Terms where the
// original P_i is zero contribute nothing. Throws ShapeError on length
// mismatch and InputError when either argument is not a distribution.
double kl_div(std::span<const double> p, std::span<const double> q);

// Throws InputError unless p is nonnegative, finite and sums to 1 within tol.
void require_distribution(std::span<const double> p, double tol,
                          const char* what);

}  // namespace gcl
