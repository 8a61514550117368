#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "gcl/tensor.hpp"

namespace gcl {

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Tape-based reverse-mode graph. Nodes are appended in creation order, which
// is a topological order, so backward() is a single reverse sweep and visits
// every node at most once. All gradient sums are accumulated in that fixed
// order, which makes gradients bit-reproducible.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // Non-differentiable view of an external tensor, read without copying.
  // `source` must outlive the graph and stay unmodified while it is used.
  Var reference(const Tensor& source);
  // Differentiable input whose gradient is read back via grad().
  Var leaf(Tensor value);
  // Differentiable view of an external tensor; backward() adds the node
  // gradient into bound.grad(). `bound` must outlive the graph and keep its
  // values until the graph is discarded.
  Var parameter(Tensor& bound);

  const Tensor& value(Var v) const { return node_value(v.id); }
  // Empty span when no gradient reached the node.
  std::span<const double> grad(Var v) const { return nodes_[v.id].grad; }

  // Seeds d(root)/d(root) = 1 and propagates. Root must hold exactly one value.
  void backward(Var root);
  void zero_grad();

  std::size_t size() const noexcept { return nodes_.size(); }
  bool grad_enabled() const noexcept { return grad_enabled_; }

  // Op-implementer interface.
  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn fn);
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  const Tensor& node_value(std::size_t id) const {
    const Node& node = nodes_[id];
    return node.view != nullptr ? *node.view : node.value;
  }
  const std::vector<double>& node_grad(std::size_t id) const {
    return nodes_[id].grad;
  }
  const std::vector<std::size_t>& parents(std::size_t id) const {
    return nodes_[id].parents;
  }
  // Gradient buffer of a parent, allocated (zero) on first use. Returns an
  // empty span when the parent does not take gradients.
  std::span<double> grad_target(std::size_t id);

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    const Tensor* view = nullptr;
    Tensor* bound = nullptr;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

// Row segmentation of a stacked [N x d] activation: segment s spans rows
// [offsets[s], offsets[s+1]).
using Segments = std::vector<std::size_t>;

namespace ag {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// a: [m x n], bias: [n]
Var add_bias(Var a, Var bias);
// a: [m x k], b: [k x n]
Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);

Var log(Var a);
Var exp(Var a);
// tanh approximation of GELU; smooth, so finite differences stay valid.
Var gelu(Var a);

Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);
// [m x n] -> [m]
Var sum_rows(Var a);

// Parameter-free RMS normalisation of each row.
Var rms_norm_rows(Var a, double eps = 1e-5);
// Softmax of each row of logits / tau, max-subtracted.
Var softmax_rows(Var logits, double tau = 1.0);
Var log_softmax_rows(Var logits, double tau = 1.0);
// Clamp each entry to >= eps and renormalise the row; rows with no entry
// below eps pass through unchanged.
Var floor_renorm_rows(Var probs, double eps);
// Unit-normalise each row; rows with norm <= min_norm raise DegenerateInputError.
Var l2_normalize_rows(Var a, double min_norm = 1e-12);

// table: [V x d]; returns rows table[ids[i]].
Var gather_rows(Var table, std::span<const std::size_t> ids);
// out[i] = a[i, cols[i]]
Var pick(Var a, std::span<const std::size_t> cols);

// Multi-head causal self-attention over each segment independently.
// q, k, v: [N x d]; heads must divide d.
Var causal_attention(Var q, Var k, Var v, const Segments& segments,
                     std::size_t heads);

// Per-segment attention pooling: alpha = softmax_l(H_l . query / sqrt(d)),
// out_s = sum_l alpha_l H_l. hidden: [N x d], query: [d]. Returns [S x d].
Var attention_pool(Var hidden, Var query, const Segments& segments);

}  // namespace ag
}  // namespace gcl
