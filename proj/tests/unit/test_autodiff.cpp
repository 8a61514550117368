#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "gcl/error.hpp"
#include "gcl/gradcheck.hpp"
#include "gcl/graph.hpp"

namespace {

using gcl::Graph;
using gcl::Tensor;
using gcl::Var;
namespace ag = gcl::ag;

Tensor random_tensor(gcl::Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> data(gcl::shape_numel(shape));
  for (double& x : data) x = n(rng);
  return Tensor(std::move(shape), std::move(data));
}

// Weighted sum so every output coordinate contributes a distinct gradient.
Var probe(Graph& g, Var out, std::uint64_t seed) {
  Var w = g.constant(random_tensor(out.shape(), seed));
  return ag::sum(ag::mul(out, w));
}

struct OpCase {
  std::string name;
  gcl::Shape shape;
  gcl::GraphFn build;
};

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  const OpCase& c = GetParam();
  const Tensor x = random_tensor(c.shape, 11);
  const auto report = gcl::finite_diff_check(c.build, x, 1e-5);
  EXPECT_TRUE(report.failed.empty());
  EXPECT_LT(report.max_rel_err, 1e-6) << c.name << " abs " << report.max_abs_err;
}

std::vector<OpCase> op_cases() {
  std::vector<OpCase> cases;
  cases.push_back({"matmul", {3, 4}, [](Graph& g, Var x) {
                     Var w = g.constant(random_tensor({4, 5}, 2));
                     return probe(g, ag::matmul(x, w), 3);
                   }});
  cases.push_back({"matmul_rhs", {4, 5}, [](Graph& g, Var x) {
                     Var a = g.constant(random_tensor({3, 4}, 2));
                     return probe(g, ag::matmul(a, x), 3);
                   }});
  cases.push_back({"transpose_reshape", {3, 4}, [](Graph& g, Var x) {
                     return probe(g, ag::reshape(ag::transpose(x), {2, 6}), 4);
                   }});
  cases.push_back({"add_bias", {5}, [](Graph& g, Var x) {
                     Var a = g.constant(random_tensor({3, 5}, 5));
                     return probe(g, ag::add_bias(a, x), 6);
                   }});
  cases.push_back({"exp_log", {6}, [](Graph& g, Var x) {
                     return probe(g, ag::log(ag::add(ag::exp(x), ag::exp(ag::scale(x, -1.0)))), 7);
                   }});
  cases.push_back({"gelu", {12}, [](Graph& g, Var x) { return probe(g, ag::gelu(x), 8); }});
  cases.push_back({"rms_norm", {3, 6}, [](Graph& g, Var x) {
                     return probe(g, ag::rms_norm_rows(x), 9);
                   }});
  cases.push_back({"softmax_tau", {3, 7}, [](Graph& g, Var x) {
                     return probe(g, ag::softmax_rows(x, 2.5), 10);
                   }});
  cases.push_back({"log_softmax", {3, 7}, [](Graph& g, Var x) {
                     return probe(g, ag::log_softmax_rows(x, 0.7), 12);
                   }});
  cases.push_back({"l2_normalize", {4, 3}, [](Graph& g, Var x) {
                     return probe(g, ag::l2_normalize_rows(x), 13);
                   }});
  cases.push_back({"gather_pick", {5, 4}, [](Graph&, Var x) {
                     const std::vector<std::size_t> ids{4, 0, 4, 2};
                     const std::vector<std::size_t> cols{1, 3, 0, 2};
                     return ag::sum(ag::pick(ag::gather_rows(x, ids), cols));
                   }});
  cases.push_back({"sum_rows_dot_mean", {4, 3}, [](Graph&, Var x) {
                     Var r = ag::sum_rows(x);
                     return ag::add(ag::dot(r, r), ag::mean(x));
                   }});
  cases.push_back({"causal_attention", {7, 8}, [](Graph& g, Var x) {
                     Var wq = g.constant(random_tensor({8, 8}, 14, 0.4));
                     Var wk = g.constant(random_tensor({8, 8}, 15, 0.4));
                     Var wv = g.constant(random_tensor({8, 8}, 16, 0.4));
                     const gcl::Segments seg{0, 3, 7};
                     Var out = ag::causal_attention(ag::matmul(x, wq), ag::matmul(x, wk),
                                                    ag::matmul(x, wv), seg, 2);
                     return probe(g, out, 17);
                   }});
  cases.push_back({"attention_pool", {6, 4}, [](Graph& g, Var x) {
                     Var q = g.constant(random_tensor({4}, 18));
                     const gcl::Segments seg{0, 2, 6};
                     return probe(g, ag::attention_pool(x, q, seg), 19);
                   }});
  return cases;
}

INSTANTIATE_TEST_SUITE_P(Ops, OpGradient, ::testing::ValuesIn(op_cases()),
                         [](const auto& info) { return info.param.name; });

TEST(Graph, SharedSubexpressionAccumulates) {
  Graph g;
  Var x = g.leaf(Tensor::vector({3.0}));
  Var y = ag::mul(x, x);
  Var z = ag::add(y, x);
  g.backward(ag::sum(z));
  ASSERT_EQ(g.grad(x).size(), 1u);
  EXPECT_DOUBLE_EQ(g.grad(x)[0], 7.0);
}

TEST(Graph, ParameterGradientLandsInTensor) {
  Tensor w = Tensor::vector({1.0, -2.0}, true);
  Graph g;
  Var v = g.parameter(w);
  g.backward(ag::dot(v, v));
  EXPECT_DOUBLE_EQ(w.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(w.grad()[1], -4.0);
}

TEST(Graph, BackwardRejectsNonScalarRoot) {
  Graph g;
  Var x = g.leaf(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(g.backward(x), gcl::UsageError);
}

TEST(Graph, ShapeMismatchThrows) {
  Graph g;
  Var a = g.leaf(Tensor::zeros({2, 3}));
  Var b = g.leaf(Tensor::zeros({2, 3}));
  EXPECT_THROW(ag::matmul(a, b), gcl::ShapeError);
  EXPECT_THROW(ag::add(a, g.leaf(Tensor::zeros({3, 2}))), gcl::ShapeError);
}

TEST(Graph, ZeroNormRowIsDegenerate) {
  Graph g;
  Var a = g.leaf(Tensor::zeros({1, 3}));
  EXPECT_THROW(ag::l2_normalize_rows(a), gcl::DegenerateInputError);
}

TEST(Graph, CausalAttentionIgnoresFuture) {
  const Tensor x = random_tensor({5, 4}, 21);
  Tensor changed = x;
  for (std::size_t c = 0; c < 4; ++c) changed[4 * 4 + c] += 3.0;
  auto run = [](const Tensor& in) {
    Graph g(false);
    Var v = g.constant(in);
    return ag::causal_attention(v, v, v, gcl::Segments{0, 5}, 2).value();
  };
  const Tensor a = run(x);
  const Tensor b = run(changed);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Graph, BackwardIsBitReproducible) {
  const Tensor x = random_tensor({4, 6}, 22);
  auto grad = [&] {
    Graph g;
    Var v = g.leaf(x);
    g.backward(probe(g, ag::softmax_rows(ag::gelu(v), 1.5), 23));
    return std::vector<double>(g.grad(v).begin(), g.grad(v).end());
  };
  EXPECT_EQ(grad(), grad());
}

TEST(GradCheck, RejectsBadStep) {
  const Tensor x = Tensor::vector({1.0});
  EXPECT_THROW(gcl::finite_diff_check([](Graph&, Var v) { return ag::sum(v); }, x, 0.0),
               gcl::DomainError);
}

TEST(GradCheck, DetectsWrongGradient) {
  const Tensor x = Tensor::vector({1.0, 2.0});
  const std::vector<double> wrong{1.0, 1.0};
  const auto r = gcl::finite_diff_check(
      [](std::span<const double> v) { return v[0] * v[0] + v[1]; }, x, wrong, 1e-5);
  EXPECT_FALSE(r.ok(1e-6));
  EXPECT_NEAR(r.max_rel_err, 0.5, 1e-6);
}

}  // namespace
