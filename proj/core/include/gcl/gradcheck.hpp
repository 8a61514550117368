#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "gcl/graph.hpp"
#include "gcl/tensor.hpp"

namespace gcl {

struct GradCheckReport {
  double max_abs_err = 0.0;
  // max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-12)
  double max_rel_err = 0.0;
  // (analytic, numeric) per coordinate of x.
  std::vector<std::pair<double, double>> per_coordinate;
  double step_h = 0.0;
  // Coordinates whose perturbed evaluations were non-finite.
  std::vector<std::size_t> failed;

  bool ok(double rel_tol) const { return failed.empty() && max_rel_err <= rel_tol; }
};

using ScalarFn = std::function<double(std::span<const double>)>;
// Builds a scalar-valued graph from a single differentiable input.
using GraphFn = std::function<Var(Graph&, Var)>;

double relative_error(double analytic, double numeric);

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h compared against a
// supplied analytic gradient. Throws DomainError for h <= 0 and ShapeError
// when the gradient length differs from x.
GradCheckReport finite_diff_check(const ScalarFn& f, const Tensor& x,
                                  std::span<const double> analytic, double h);

// Same, with the analytic gradient taken from reverse-mode autodiff of `build`.
GradCheckReport finite_diff_check(const GraphFn& build, const Tensor& x,
                                  double h);

// Evaluates `build` at x without recording gradients.
double evaluate(const GraphFn& build, const Tensor& x);

}  // namespace gcl
