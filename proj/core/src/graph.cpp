#include "gcl/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gcl/error.hpp"

namespace gcl {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(std::span<const double> data, std::size_t rows,
                   std::size_t cols) {
  return ConstMap(data.data(), static_cast<Eigen::Index>(rows),
                  static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(std::span<double> data, std::size_t rows, std::size_t cols) {
  return MutMap(data.data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}

// Row view used by the row-wise ops: rank-1 tensors are a single row.
struct RowLayout {
  std::size_t rows;
  std::size_t cols;
};

RowLayout row_layout(const Tensor& t) {
  if (t.rank() == 0) return {1, 1};
  const std::size_t cols = t.shape().back();
  return {cols == 0 ? 0 : t.size() / cols, cols};
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()) + " differ");
  }
}

void require_rank(const char* op, Var a, std::size_t rank) {
  if (a.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got shape " +
                     shape_str(a.shape()));
  }
}

void require_same_graph(Var a, Var b) {
  if (a.graph != b.graph) throw UsageError("vars belong to different graphs");
}

void check_segments(const char* op, const Segments& segments,
                    std::size_t rows) {
  if (segments.size() < 2 || segments.front() != 0 ||
      segments.back() != rows) {
    throw ShapeError(std::string(op) + ": segments must cover all " +
                     std::to_string(rows) + " rows");
  }
  for (std::size_t s = 0; s + 1 < segments.size(); ++s) {
    if (segments[s + 1] <= segments[s]) {
      throw ShapeError(std::string(op) + ": empty or unordered segment");
    }
  }
}

}  // namespace

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::constant(Tensor value) {
  value.set_requires_grad(false);
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Graph::leaf(Tensor value) {
  value.set_requires_grad(false);
  Node node;
  node.value = std::move(value);
  node.needs_grad = grad_enabled_;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Graph::reference(const Tensor& source) {
  Node node;
  node.view = &source;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Graph::parameter(Tensor& bound) {
  Node node;
  node.view = &bound;
  if (grad_enabled_) {
    if (!bound.requires_grad()) bound.set_requires_grad(true);
    node.bound = &bound;
    node.needs_grad = true;
  }
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::vector<std::size_t> parents,
                  BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  if (grad_enabled_) {
    node.needs_grad = std::any_of(parents.begin(), parents.end(),
                                  [&](std::size_t p) {
                                    return nodes_[p].needs_grad;
                                  });
  }
  if (node.needs_grad) {
    node.parents = std::move(parents);
    node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

std::span<double> Graph::grad_target(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.needs_grad) return {};
  if (node.grad.empty()) node.grad.assign(node_value(id).size(), 0.0);
  return node.grad;
}

void Graph::backward(Var root) {
  if (root.graph != this) throw UsageError("backward: root from another graph");
  if (node_value(root.id).size() != 1) {
    throw UsageError("backward: root must be scalar, got shape " +
                     shape_str(node_value(root.id).shape()));
  }
  if (!grad_enabled_) throw UsageError("backward: graph built without grad");
  auto seed = grad_target(root.id);
  if (seed.empty()) return;
  seed[0] += 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty() || !node.backward) continue;
    node.backward(*this, i);
  }
  for (Node& node : nodes_) {
    if (node.bound == nullptr || node.grad.empty()) continue;
    auto dst = node.bound->grad();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += node.grad[j];
  }
}

void Graph::zero_grad() {
  for (Node& node : nodes_) node.grad.clear();
}

namespace ag {

Var add(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape("add", a, b);
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += bv[i];
  return a.graph->record(std::move(out), {a.id, b.id},
                         [](Graph& g, std::size_t self) {
                           const auto& go = g.node_grad(self);
                           for (std::size_t p : g.parents(self)) {
                             auto dp = g.grad_target(p);
                             for (std::size_t i = 0; i < dp.size(); ++i)
                               dp[i] += go[i];
                           }
                         });
}

Var sub(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] -= bv[i];
  return a.graph->record(std::move(out), {a.id, b.id},
                         [](Graph& g, std::size_t self) {
                           const auto& go = g.node_grad(self);
                           const auto& ps = g.parents(self);
                           auto da = g.grad_target(ps[0]);
                           for (std::size_t i = 0; i < da.size(); ++i)
                             da[i] += go[i];
                           auto db = g.grad_target(ps[1]);
                           for (std::size_t i = 0; i < db.size(); ++i)
                             db[i] -= go[i];
                         });
}

Var mul(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] *= bv[i];
  return a.graph->record(
      std::move(out), {a.id, b.id}, [](Graph& g, std::size_t self) {
        const auto& go = g.node_grad(self);
        const auto& ps = g.parents(self);
        const auto av = g.node_value(ps[0]).data();
        const auto bv = g.node_value(ps[1]).data();
        auto da = g.grad_target(ps[0]);
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += go[i] * bv[i];
        auto db = g.grad_target(ps[1]);
        for (std::size_t i = 0; i < db.size(); ++i) db[i] += go[i] * av[i];
      });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& x : out.data()) x *= s;
  return a.graph->record(std::move(out), {a.id},
                         [s](Graph& g, std::size_t self) {
                           const auto& go = g.node_grad(self);
                           auto da = g.grad_target(g.parents(self)[0]);
                           for (std::size_t i = 0; i < da.size(); ++i)
                             da[i] += s * go[i];
                         });
}

Var add_bias(Var a, Var bias) {
  require_same_graph(a, bias);
  require_rank("add_bias", a, 2);
  const std::size_t m = a.shape()[0];
  const std::size_t n = a.shape()[1];
  if (bias.value().size() != n) {
    throw ShapeError("add_bias: bias length " +
                     std::to_string(bias.value().size()) + " vs " +
                     std::to_string(n) + " columns");
  }
  Tensor out = a.value();
  const auto bv = bias.value().data();
  auto ov = out.data();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) ov[r * n + c] += bv[c];
  return a.graph->record(
      std::move(out), {a.id, bias.id}, [m, n](Graph& g, std::size_t self) {
        const auto& go = g.node_grad(self);
        const auto& ps = g.parents(self);
        auto da = g.grad_target(ps[0]);
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += go[i];
        auto db = g.grad_target(ps[1]);
        if (!db.empty()) {
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) db[c] += go[r * n + c];
        }
      });
}

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const std::size_t n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros({m, n});
  as_matrix(out.data(), m, n).noalias() =
      as_matrix(a.value().data(), m, k) * as_matrix(b.value().data(), k, n);
  return a.graph->record(
      std::move(out), {a.id, b.id}, [m, k, n](Graph& g, std::size_t self) {
        const auto& ps = g.parents(self);
        const auto go = as_matrix(std::span<const double>(g.node_grad(self)),
                                  m, n);
        auto da = g.grad_target(ps[0]);
        if (!da.empty()) {
          as_matrix(da, m, k).noalias() +=
              go * as_matrix(g.node_value(ps[1]).data(), k, n).transpose();
        }
        auto db = g.grad_target(ps[1]);
        if (!db.empty()) {
          as_matrix(db, k, n).noalias() +=
              as_matrix(g.node_value(ps[0]).data(), m, k).transpose() * go;
        }
      });
}

Var transpose(Var a) {
  require_rank("transpose", a, 2);
  const std::size_t m = a.shape()[0];
  const std::size_t n = a.shape()[1];
  Tensor out = Tensor::zeros({n, m});
  const auto av = a.value().data();
  auto ov = out.data();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) ov[c * m + r] = av[r * n + c];
  return a.graph->record(std::move(out), {a.id},
                         [m, n](Graph& g, std::size_t self) {
                           const auto& go = g.node_grad(self);
                           auto da = g.grad_target(g.parents(self)[0]);
                           for (std::size_t r = 0; r < m; ++r)
                             for (std::size_t c = 0; c < n; ++c)
                               da[r * n + c] += go[c * m + r];
                         });
}

Var reshape(Var a, Shape shape) {
  Tensor out(std::move(shape), a.value().storage());
  return a.graph->record(std::move(out), {a.id},
                         [](Graph& g, std::size_t self) {
                           const auto& go = g.node_grad(self);
                           auto da = g.grad_target(g.parents(self)[0]);
                           for (std::size_t i = 0; i < da.size(); ++i)
                             da[i] += go[i];
                         });
}

Var log(Var a) {
  Tensor out = a.value();
  for (double& x : out.data()) x = std::log(x);
  return a.graph->record(std::move(out), {a.id},
                         [](Graph& g, std::size_t self) {
                           const std::size_t p = g.parents(self)[0];
                           const auto& go = g.node_grad(self);
                           const auto av = g.node_value(p).data();
                           auto da = g.grad_target(p);
                           for (std::size_t i = 0; i < da.size(); ++i)
                             da[i] += go[i] / av[i];
                         });
}

Var exp(Var a) {
  Tensor out = a.value();
  for (double& x : out.data()) x = std::exp(x);
  return a.graph->record(std::move(out), {a.id},
                         [](Graph& g, std::size_t self) {
                           const auto& go = g.node_grad(self);
                           const auto ov = g.node_value(self).data();
                           auto da = g.grad_target(g.parents(self)[0]);
                           for (std::size_t i = 0; i < da.size(); ++i)
                             da[i] += go[i] * ov[i];
                         });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Var a) {
  Tensor out = a.value();
  for (double& x : out.data()) {
    x = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  }
  return a.graph->record(
      std::move(out), {a.id}, [](Graph& g, std::size_t self) {
        const std::size_t p = g.parents(self)[0];
        const auto& go = g.node_grad(self);
        const auto av = g.node_value(p).data();
        auto da = g.grad_target(p);
        for (std::size_t i = 0; i < da.size(); ++i) {
          const double x = av[i];
          const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
          const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC *
                                                 (1.0 + 3.0 * kGeluA * x * x);
          da[i] += go[i] * d;
        }
      });
}

Var sum(Var a) {
  double total = 0.0;
  for (double x : a.value().data()) total += x;
  return a.graph->record(Tensor::scalar(total), {a.id},
                         [](Graph& g, std::size_t self) {
                           const double go = g.node_grad(self)[0];
                           auto da = g.grad_target(g.parents(self)[0]);
                           for (double& d : da) d += go;
                         });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var dot(Var a, Var b) { return sum(mul(a, b)); }

Var sum_rows(Var a) {
  const auto [m, n] = row_layout(a.value());
  Tensor out = Tensor::zeros({m});
  const auto av = a.value().data();
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += av[r * n + c];
    out[r] = s;
  }
  return a.graph->record(std::move(out), {a.id},
                         [m, n](Graph& g, std::size_t self) {
                           const auto& go = g.node_grad(self);
                           auto da = g.grad_target(g.parents(self)[0]);
                           for (std::size_t r = 0; r < m; ++r)
                             for (std::size_t c = 0; c < n; ++c)
                               da[r * n + c] += go[r];
                         });
}

Var rms_norm_rows(Var a, double eps) {
  const auto [m, n] = row_layout(a.value());
  Tensor out = a.value();
  std::vector<double> inv_rms(m);
  auto ov = out.data();
  for (std::size_t r = 0; r < m; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < n; ++c) ss += ov[r * n + c] * ov[r * n + c];
    inv_rms[r] = 1.0 / std::sqrt(ss / static_cast<double>(n) + eps);
    for (std::size_t c = 0; c < n; ++c) ov[r * n + c] *= inv_rms[r];
  }
  return a.graph->record(
      std::move(out), {a.id},
      [m, n, inv_rms = std::move(inv_rms)](Graph& g, std::size_t self) {
        const auto& go = g.node_grad(self);
        const auto y = g.node_value(self).data();
        auto da = g.grad_target(g.parents(self)[0]);
        for (std::size_t r = 0; r < m; ++r) {
          double gy = 0.0;
          for (std::size_t c = 0; c < n; ++c) gy += go[r * n + c] * y[r * n + c];
          gy /= static_cast<double>(n);
          for (std::size_t c = 0; c < n; ++c) {
            da[r * n + c] += (go[r * n + c] - y[r * n + c] * gy) * inv_rms[r];
          }
        }
      });
}

Var softmax_rows(Var logits, double tau) {
  if (!(tau > 0.0)) throw DomainError("softmax_rows: tau must be positive");
  const auto [m, n] = row_layout(logits.value());
  Tensor out = logits.value();
  auto ov = out.data();
  for (std::size_t r = 0; r < m; ++r) {
    double* row = ov.data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      row[c] = std::exp((row[c] - mx) / tau);
      s += row[c];
    }
    for (std::size_t c = 0; c < n; ++c) row[c] /= s;
  }
  return logits.graph->record(
      std::move(out), {logits.id}, [m, n, tau](Graph& g, std::size_t self) {
        const auto& go = g.node_grad(self);
        const auto p = g.node_value(self).data();
        auto da = g.grad_target(g.parents(self)[0]);
        for (std::size_t r = 0; r < m; ++r) {
          double gp = 0.0;
          for (std::size_t c = 0; c < n; ++c) gp += go[r * n + c] * p[r * n + c];
          for (std::size_t c = 0; c < n; ++c) {
            da[r * n + c] += p[r * n + c] * (go[r * n + c] - gp) / tau;
          }
        }
      });
}

Var log_softmax_rows(Var logits, double tau) {
  if (!(tau > 0.0)) throw DomainError("log_softmax_rows: tau must be positive");
  const auto [m, n] = row_layout(logits.value());
  Tensor out = logits.value();
  auto ov = out.data();
  for (std::size_t r = 0; r < m; ++r) {
    double* row = ov.data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      row[c] = (row[c] - mx) / tau;
      s += std::exp(row[c]);
    }
    const double lse = std::log(s);
    for (std::size_t c = 0; c < n; ++c) row[c] -= lse;
  }
  return logits.graph->record(
      std::move(out), {logits.id}, [m, n, tau](Graph& g, std::size_t self) {
        const auto& go = g.node_grad(self);
        const auto lp = g.node_value(self).data();
        auto da = g.grad_target(g.parents(self)[0]);
        for (std::size_t r = 0; r < m; ++r) {
          double gs = 0.0;
          for (std::size_t c = 0; c < n; ++c) gs += go[r * n + c];
          for (std::size_t c = 0; c < n; ++c) {
            da[r * n + c] +=
                (go[r * n + c] - std::exp(lp[r * n + c]) * gs) / tau;
          }
        }
      });
}

Var floor_renorm_rows(Var probs, double eps) {
  const auto [m, n] = row_layout(probs.value());
  Tensor out = probs.value();
  // Rows with no entry below eps pass through untouched (sums[r] == 0).
  std::vector<double> sums(m, 0.0);
  auto ov = out.data();
  for (std::size_t r = 0; r < m; ++r) {
    double* row = ov.data() + r * n;
    if (std::none_of(row, row + n, [eps](double x) { return x < eps; })) {
      continue;
    }
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      row[c] = std::max(row[c], eps);
      s += row[c];
    }
    sums[r] = s;
    for (std::size_t c = 0; c < n; ++c) row[c] /= s;
  }
  return probs.graph->record(
      std::move(out), {probs.id},
      [m, n, eps, sums = std::move(sums)](Graph& g, std::size_t self) {
        const std::size_t p = g.parents(self)[0];
        const auto& go = g.node_grad(self);
        const auto q = g.node_value(self).data();
        const auto in = g.node_value(p).data();
        auto da = g.grad_target(p);
        for (std::size_t r = 0; r < m; ++r) {
          if (sums[r] == 0.0) {
            for (std::size_t c = 0; c < n; ++c) da[r * n + c] += go[r * n + c];
            continue;
          }
          double gq = 0.0;
          for (std::size_t c = 0; c < n; ++c) gq += go[r * n + c] * q[r * n + c];
          for (std::size_t c = 0; c < n; ++c) {
            if (in[r * n + c] >= eps) {
              da[r * n + c] += (go[r * n + c] - gq) / sums[r];
            }
          }
        }
      });
}

Var l2_normalize_rows(Var a, double min_norm) {
  const auto [m, n] = row_layout(a.value());
  Tensor out = a.value();
  std::vector<double> norms(m);
  auto ov = out.data();
  for (std::size_t r = 0; r < m; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < n; ++c) ss += ov[r * n + c] * ov[r * n + c];
    norms[r] = std::sqrt(ss);
    if (!(norms[r] > min_norm)) {
      throw DegenerateInputError("l2_normalize_rows: row " + std::to_string(r) +
                                 " has near-zero norm");
    }
    for (std::size_t c = 0; c < n; ++c) ov[r * n + c] /= norms[r];
  }
  return a.graph->record(
      std::move(out), {a.id},
      [m, n, norms = std::move(norms)](Graph& g, std::size_t self) {
        const auto& go = g.node_grad(self);
        const auto y = g.node_value(self).data();
        auto da = g.grad_target(g.parents(self)[0]);
        for (std::size_t r = 0; r < m; ++r) {
          double gy = 0.0;
          for (std::size_t c = 0; c < n; ++c) gy += go[r * n + c] * y[r * n + c];
          for (std::size_t c = 0; c < n; ++c) {
            da[r * n + c] += (go[r * n + c] - y[r * n + c] * gy) / norms[r];
          }
        }
      });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  require_rank("gather_rows", table, 2);
  const std::size_t v = table.shape()[0];
  const std::size_t d = table.shape()[1];
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  Tensor out = Tensor::zeros({rows.size(), d});
  const auto tv = table.value().data();
  auto ov = out.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= v) {
      throw InputError("gather_rows: id " + std::to_string(rows[i]) +
                       " out of range " + std::to_string(v));
    }
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d,
                ov.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return table.graph->record(
      std::move(out), {table.id},
      [d, rows = std::move(rows)](Graph& g, std::size_t self) {
        const auto& go = g.node_grad(self);
        auto dt = g.grad_target(g.parents(self)[0]);
        for (std::size_t i = 0; i < rows.size(); ++i)
          for (std::size_t c = 0; c < d; ++c)
            dt[rows[i] * d + c] += go[i * d + c];
      });
}

Var pick(Var a, std::span<const std::size_t> cols) {
  const auto [m, n] = row_layout(a.value());
  if (cols.size() != m) {
    throw ShapeError("pick: " + std::to_string(cols.size()) +
                     " indices for " + std::to_string(m) + " rows");
  }
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  Tensor out = Tensor::zeros({m});
  const auto av = a.value().data();
  for (std::size_t r = 0; r < m; ++r) {
    if (idx[r] >= n) throw InputError("pick: column index out of range");
    out[r] = av[r * n + idx[r]];
  }
  return a.graph->record(std::move(out), {a.id},
                         [n, idx = std::move(idx)](Graph& g, std::size_t self) {
                           const auto& go = g.node_grad(self);
                           auto da = g.grad_target(g.parents(self)[0]);
                           for (std::size_t r = 0; r < idx.size(); ++r)
                             da[r * n + idx[r]] += go[r];
                         });
}

Var causal_attention(Var q, Var k, Var v, const Segments& segments,
                     std::size_t heads) {
  require_same_graph(q, k);
  require_same_graph(q, v);
  require_rank("causal_attention", q, 2);
  require_same_shape("causal_attention", q, k);
  require_same_shape("causal_attention", q, v);
  const std::size_t rows = q.shape()[0];
  const std::size_t d = q.shape()[1];
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("causal_attention: heads must divide width");
  }
  check_segments("causal_attention", segments, rows);
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  // probs holds, per (segment, head), the lower-triangular attention rows.
  std::vector<std::size_t> prob_offset;
  std::size_t total = 0;
  for (std::size_t s = 0; s + 1 < segments.size(); ++s) {
    const std::size_t len = segments[s + 1] - segments[s];
    for (std::size_t h = 0; h < heads; ++h) {
      prob_offset.push_back(total);
      total += len * (len + 1) / 2;
    }
  }
  std::vector<double> probs(total);

  const auto qv = q.value().data();
  const auto kv = k.value().data();
  const auto vv = v.value().data();
  Tensor out = Tensor::zeros({rows, d});
  auto ov = out.data();
  std::size_t slot = 0;
  for (std::size_t s = 0; s + 1 < segments.size(); ++s) {
    const std::size_t base = segments[s];
    const std::size_t len = segments[s + 1] - base;
    for (std::size_t h = 0; h < heads; ++h, ++slot) {
      const std::size_t col = h * dh;
      double* p = probs.data() + prob_offset[slot];
      for (std::size_t t = 0; t < len; ++t) {
        double* prow = p + t * (t + 1) / 2;
        const double* qt = qv.data() + (base + t) * d + col;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= t; ++j) {
          const double* kj = kv.data() + (base + j) * d + col;
          double sc = 0.0;
          for (std::size_t c = 0; c < dh; ++c) sc += qt[c] * kj[c];
          prow[j] = sc * inv_sqrt;
          mx = std::max(mx, prow[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j <= t; ++j) {
          prow[j] = std::exp(prow[j] - mx);
          z += prow[j];
        }
        double* ot = ov.data() + (base + t) * d + col;
        for (std::size_t j = 0; j <= t; ++j) {
          prow[j] /= z;
          const double* vj = vv.data() + (base + j) * d + col;
          for (std::size_t c = 0; c < dh; ++c) ot[c] += prow[j] * vj[c];
        }
      }
    }
  }

  return q.graph->record(
      std::move(out), {q.id, k.id, v.id},
      [segments, heads, d, dh, inv_sqrt, probs = std::move(probs),
       prob_offset = std::move(prob_offset)](Graph& g, std::size_t self) {
        const auto& ps = g.parents(self);
        const auto& go = g.node_grad(self);
        const auto qv = g.node_value(ps[0]).data();
        const auto kv = g.node_value(ps[1]).data();
        const auto vv = g.node_value(ps[2]).data();
        auto dq = g.grad_target(ps[0]);
        auto dk = g.grad_target(ps[1]);
        auto dv = g.grad_target(ps[2]);
        std::vector<double> ds;
        std::size_t slot = 0;
        for (std::size_t s = 0; s + 1 < segments.size(); ++s) {
          const std::size_t base = segments[s];
          const std::size_t len = segments[s + 1] - base;
          ds.resize(len);
          for (std::size_t h = 0; h < heads; ++h, ++slot) {
            const std::size_t col = h * dh;
            const double* p = probs.data() + prob_offset[slot];
            for (std::size_t t = 0; t < len; ++t) {
              const double* prow = p + t * (t + 1) / 2;
              const double* gt = go.data() + (base + t) * d + col;
              double weighted = 0.0;
              for (std::size_t j = 0; j <= t; ++j) {
                const double* vj = vv.data() + (base + j) * d + col;
                double dp = 0.0;
                for (std::size_t c = 0; c < dh; ++c) dp += gt[c] * vj[c];
                ds[j] = dp;
                weighted += dp * prow[j];
              }
              for (std::size_t j = 0; j <= t; ++j) {
                ds[j] = prow[j] * (ds[j] - weighted) * inv_sqrt;
              }
              if (!dv.empty()) {
                for (std::size_t j = 0; j <= t; ++j) {
                  double* dvj = dv.data() + (base + j) * d + col;
                  for (std::size_t c = 0; c < dh; ++c) dvj[c] += prow[j] * gt[c];
                }
              }
              if (!dq.empty()) {
                double* dqt = dq.data() + (base + t) * d + col;
                for (std::size_t j = 0; j <= t; ++j) {
                  const double* kj = kv.data() + (base + j) * d + col;
                  for (std::size_t c = 0; c < dh; ++c) dqt[c] += ds[j] * kj[c];
                }
              }
              if (!dk.empty()) {
                const double* qt = qv.data() + (base + t) * d + col;
                for (std::size_t j = 0; j <= t; ++j) {
                  double* dkj = dk.data() + (base + j) * d + col;
                  for (std::size_t c = 0; c < dh; ++c) dkj[c] += ds[j] * qt[c];
                }
              }
            }
          }
        }
      });
}

Var attention_pool(Var hidden, Var query, const Segments& segments) {
  require_same_graph(hidden, query);
  require_rank("attention_pool", hidden, 2);
  const std::size_t rows = hidden.shape()[0];
  const std::size_t d = hidden.shape()[1];
  if (query.value().size() != d) {
    throw ShapeError("attention_pool: query length must equal hidden width");
  }
  check_segments("attention_pool", segments, rows);
  const std::size_t count = segments.size() - 1;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d));

  const auto hv = hidden.value().data();
  const auto qv = query.value().data();
  std::vector<double> alpha(rows);
  Tensor out = Tensor::zeros({count, d});
  auto ov = out.data();
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t lo = segments[s];
    const std::size_t hi = segments[s + 1];
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t l = lo; l < hi; ++l) {
      double sc = 0.0;
      for (std::size_t c = 0; c < d; ++c) sc += hv[l * d + c] * qv[c];
      alpha[l] = sc * inv_sqrt;
      mx = std::max(mx, alpha[l]);
    }
    double z = 0.0;
    for (std::size_t l = lo; l < hi; ++l) {
      alpha[l] = std::exp(alpha[l] - mx);
      z += alpha[l];
    }
    for (std::size_t l = lo; l < hi; ++l) {
      alpha[l] /= z;
      for (std::size_t c = 0; c < d; ++c)
        ov[s * d + c] += alpha[l] * hv[l * d + c];
    }
  }

  return hidden.graph->record(
      std::move(out), {hidden.id, query.id},
      [segments, d, count, inv_sqrt, alpha = std::move(alpha)](
          Graph& g, std::size_t self) {
        const auto& ps = g.parents(self);
        const auto& go = g.node_grad(self);
        const auto hv = g.node_value(ps[0]).data();
        const auto qv = g.node_value(ps[1]).data();
        auto dh = g.grad_target(ps[0]);
        auto dq = g.grad_target(ps[1]);
        std::vector<double> ds;
        for (std::size_t s = 0; s < count; ++s) {
          const std::size_t lo = segments[s];
          const std::size_t hi = segments[s + 1];
          const double* gs = go.data() + s * d;
          ds.assign(hi - lo, 0.0);
          double weighted = 0.0;
          for (std::size_t l = lo; l < hi; ++l) {
            double da = 0.0;
            for (std::size_t c = 0; c < d; ++c) da += gs[c] * hv[l * d + c];
            ds[l - lo] = da;
            weighted += alpha[l] * da;
          }
          for (std::size_t l = lo; l < hi; ++l) {
            const double dscore = alpha[l] * (ds[l - lo] - weighted) * inv_sqrt;
            if (!dh.empty()) {
              for (std::size_t c = 0; c < d; ++c) {
                dh[l * d + c] += alpha[l] * gs[c] + dscore * qv[c];
              }
            }
            if (!dq.empty()) {
              for (std::size_t c = 0; c < d; ++c) dq[c] += dscore * hv[l * d + c];
            }
          }
        }
      });
}

}  // namespace ag
}  // namespace gcl
