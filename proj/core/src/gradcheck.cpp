#include "gcl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gcl/error.hpp"

namespace gcl {

double relative_error(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport finite_diff_check(const ScalarFn& f, const Tensor& x,
                                  std::span<const double> analytic, double h) {
  if (!(h > 0.0)) throw DomainError("finite_diff_check: h must be positive");
  if (analytic.size() != x.size()) {
    throw ShapeError("finite_diff_check: gradient has " +
                     std::to_string(analytic.size()) + " entries, x has " +
                     std::to_string(x.size()));
  }
  GradCheckReport report;
  report.step_h = h;
  report.per_coordinate.reserve(x.size());
  std::vector<double> probe(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double plus = f(probe);
    probe[i] = saved - h;
    const double minus = f(probe);
    probe[i] = saved;
    const double numeric = (plus - minus) / (2.0 * h);
    report.per_coordinate.emplace_back(analytic[i], numeric);
    if (!std::isfinite(numeric)) {
      report.failed.push_back(i);
      continue;
    }
    report.max_abs_err =
        std::max(report.max_abs_err, std::abs(analytic[i] - numeric));
    report.max_rel_err =
        std::max(report.max_rel_err, relative_error(analytic[i], numeric));
  }
  return report;
}

double evaluate(const GraphFn& build, const Tensor& x) {
  Graph graph(false);
  Var in = graph.constant(x);
  return build(graph, in).value().item();
}

GradCheckReport finite_diff_check(const GraphFn& build, const Tensor& x,
                                  double h) {
  Graph graph;
  Var in = graph.leaf(x);
  Var root = build(graph, in);
  graph.backward(root);
  std::vector<double> analytic(x.size(), 0.0);
  const auto g = graph.grad(in);
  std::copy(g.begin(), g.end(), analytic.begin());

  const Shape shape = x.shape();
  auto f = [&](std::span<const double> probe) {
    return evaluate(build,
                    Tensor(shape, std::vector<double>(probe.begin(), probe.end())));
  };
  return finite_diff_check(f, x, analytic, h);
}

}  // namespace gcl
