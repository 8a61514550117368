#include "gcl/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "gcl/error.hpp"
#include "gcl/gradcheck.hpp"
#include "gcl/graph.hpp"
#include "gcl/objectives.hpp"

namespace gcl {
namespace {

std::vector<double> normal_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> out(n);
  for (double& x : out) x = normal(rng);
  return out;
}

double normwise_rel_err(const GradCheckReport& r) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (auto [a, n] : r.per_coordinate) {
    diff += (a - n) * (a - n);
    na += a * a;
    nn += n * n;
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return std::sqrt(diff) / denom;
}

double checked(const GradCheckReport& r) {
  if (!r.failed.empty()) throw NumericalError("gradient check hit non-finite evaluations");
  return normwise_rel_err(r);
}

}  // namespace

DrlGradCheck check_drl_closed_form(std::size_t pairs, std::size_t vocab,
                                   std::span<const double> taus, std::uint64_t seed, double h) {
  if (pairs == 0 || vocab < 2 || taus.empty()) {
    throw UsageError("check_drl_closed_form: needs pairs >= 1, vocab >= 2, taus");
  }
  std::mt19937_64 rng(seed);
  DrlGradCheck out;
  out.pairs = pairs;
  for (std::size_t p = 0; p < pairs; ++p) {
    const double tau_a = taus[p % taus.size()];
    const double tau_b = taus[(p / taus.size()) % taus.size()];
    const std::vector<double> z = normal_vector(rng, 2 * vocab);
    const std::span<const double> za(z.data(), vocab), zb(z.data() + vocab, vocab);

    const DrlGradient g = drl_grad_closed_form(za, zb, tau_a, tau_b);
    std::vector<double> analytic(g.grad_a);
    analytic.insert(analytic.end(), g.grad_b.begin(), g.grad_b.end());

    const ScalarFn f = [&](std::span<const double> x) {
      return drl_loss(DistributionPair::from_logits(x.subspan(0, vocab), x.subspan(vocab),
                                                    tau_a, tau_b),
                      true);
    };
    const GradCheckReport r = finite_diff_check(f, Tensor({2 * vocab}, z), analytic, h);
    out.max_rel_err = std::max(out.max_rel_err, checked(r));
    out.max_coord_rel_err = std::max(out.max_coord_rel_err, r.max_rel_err);
    out.max_abs_err = std::max(out.max_abs_err, r.max_abs_err);
  }
  return out;
}

ComponentGradCheck check_gco_components(std::size_t instances, std::uint64_t seed, double h) {
  std::mt19937_64 rng(seed);
  ComponentGradCheck out;
  out.instances = instances;
  for (std::size_t i = 0; i < instances; ++i) {
    // Supervised: [6 x 9] logits, four target rows.
    {
      const std::vector<std::size_t> rows = {1, 2, 4, 5};
      std::vector<TokenId> labels;
      std::uniform_int_distribution<TokenId> pick(0, 8);
      for (std::size_t k = 0; k < rows.size(); ++k) labels.push_back(pick(rng));
      const GraphFn build = [&](Graph&, Var x) { return supervised_loss(x, rows, labels); };
      const auto r = finite_diff_check(build, Tensor({6, 9}, normal_vector(rng, 54)), h);
      out.sup_rel_err = std::max(out.sup_rel_err, checked(r));
    }
    // Semantic: both members' raw [4 x 5] vectors in one leaf, normalised
    // inside the graph, InfoNCE at tau 0.07.
    {
      const std::vector<std::size_t> a_rows = {0, 1, 2, 3}, b_rows = {4, 5, 6, 7};
      const GraphFn build = [&](Graph&, Var x) {
        Var a = ag::l2_normalize_rows(ag::gather_rows(x, a_rows));
        Var b = ag::l2_normalize_rows(ag::gather_rows(x, b_rows));
        return gsl_loss(a, b, 0.07, true);
      };
      const auto r = finite_diff_check(build, Tensor({8, 5}, normal_vector(rng, 40)), h);
      out.gsl_rel_err = std::max(out.gsl_rel_err, checked(r));
    }
    // Distributional: [3 x 11] logit blocks per member, scaled, tau 3 / 2.
    {
      const std::vector<std::size_t> a_rows = {0, 1, 2}, b_rows = {3, 4, 5};
      const GraphFn build = [&](Graph&, Var x) {
        return drl_loss(ag::gather_rows(x, a_rows), ag::gather_rows(x, b_rows), 3.0, 2.0, true);
      };
      const auto r = finite_diff_check(build, Tensor({6, 11}, normal_vector(rng, 66)), h);
      out.drl_rel_err = std::max(out.drl_rel_err, checked(r));
    }
  }
  return out;
}

}  // namespace gcl
