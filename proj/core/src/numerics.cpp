#include "gcl/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gcl/error.hpp"

namespace gcl {

std::vector<double> softmax_temp(std::span<const double> logits, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw DomainError("softmax_temp: tau must be positive and finite");
  }
  if (logits.empty()) throw InputError("softmax_temp: empty logits");
  for (double z : logits) {
    if (!std::isfinite(z)) throw InputError("softmax_temp: non-finite logit");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - mx) / tau);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

std::vector<double> floor_renormalize(std::span<const double> p, double eps) {
  std::vector<double> out(p.begin(), p.end());
  if (std::none_of(out.begin(), out.end(), [eps](double x) { return x < eps; })) {
    return out;
  }
  double total = 0.0;
  for (double& x : out) {
    x = std::max(x, eps);
    total += x;
  }
  for (double& x : out) x /= total;
  return out;
}

void require_distribution(std::span<const double> p, double tol,
                          const char* what) {
  double total = 0.0;
  for (double x : p) {
    if (!std::isfinite(x) || x < 0.0) {
      throw InputError(std::string(what) + ": entries must be finite and >= 0");
    }
    total += x;
  }
  if (std::abs(total - 1.0) > tol) {
    throw InputError(std::string(what) + ": sums to " + std::to_string(total));
  }
}

double kl_div(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw ShapeError("kl_div: lengths " + std::to_string(p.size()) + " and " +
                     std::to_string(q.size()) + " differ");
  }
  require_distribution(p, 1e-9, "kl_div P");
  require_distribution(q, 1e-9, "kl_div Q");
  const auto pf = floor_renormalize(p);
  const auto qf = floor_renormalize(q);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    total += pf[i] * std::log(pf[i] / qf[i]);
  }
  return std::max(total, 0.0);
}

}  // namespace gcl
