#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace gcl {

struct DrlGradCheck {
  std::size_t pairs = 0;
  // Worst pair of ||analytic - numeric|| / max(||analytic||, ||numeric||).
  double max_rel_err = 0.0;
  // Worst single coordinate, relative to max(|analytic|, |numeric|, 1e-12).
  double max_coord_rel_err = 0.0;
  double max_abs_err = 0.0;
};

// Closed-form scaled-DRL gradient against central differences on random
// N(0, 1) logit pairs, cycling through every (tau_a, tau_b) in taus x taus.
DrlGradCheck check_drl_closed_form(std::size_t pairs, std::size_t vocab,
                                   std::span<const double> taus, std::uint64_t seed,
                                   double h = 1e-5);

struct ComponentGradCheck {
  double sup_rel_err = 0.0;
  double gsl_rel_err = 0.0;
  double drl_rel_err = 0.0;
  std::size_t instances = 0;
};

// Autodiff gradients of the supervised, semantic and distributional losses
// against central differences on small random instances (norm-wise relative
// error, worst instance).
ComponentGradCheck check_gco_components(std::size_t instances, std::uint64_t seed,
                                        double h = 1e-5);

}  // namespace gcl
