#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "gcl/graph.hpp"
#include "gcl/metrics.hpp"
#include "gcl/objectives.hpp"

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

void BM_DrlClosedForm(benchmark::State& state) {
  const auto vocab = static_cast<std::size_t>(state.range(0));
  const auto za = normals(vocab, 1);
  const auto zb = normals(vocab, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gcl::drl_grad_closed_form(za, zb, 3.0, 2.0));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(vocab));
}
BENCHMARK(BM_DrlClosedForm)->RangeMultiplier(4)->Range(32, 512);

void BM_DrlGraphBackward(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t vocab = 128;
  const gcl::Tensor a({rows, vocab}, normals(rows * vocab, 3));
  const gcl::Tensor b({rows, vocab}, normals(rows * vocab, 4));
  for (auto _ : state) {
    gcl::Graph g;
    gcl::Var va = g.leaf(a);
    gcl::Var vb = g.leaf(b);
    g.backward(gcl::drl_loss(va, vb, 3.0, 2.0, true));
    benchmark::DoNotOptimize(g.grad(va).data());
  }
}
BENCHMARK(BM_DrlGraphBackward)->Arg(16)->Arg(128)->Arg(512);

void BM_GslBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 32;
  const gcl::Tensor a({batch, dim}, normals(batch * dim, 5));
  const gcl::Tensor b({batch, dim}, normals(batch * dim, 6));
  for (auto _ : state) {
    gcl::Graph g;
    gcl::Var va = g.leaf(a);
    gcl::Var vb = g.leaf(b);
    g.backward(gcl::gsl_loss(gcl::ag::l2_normalize_rows(va), gcl::ag::l2_normalize_rows(vb), 0.07));
    benchmark::DoNotOptimize(g.grad(va).data());
  }
}
BENCHMARK(BM_GslBackward)->Arg(16)->Arg(64);

void BM_TokenF1(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const auto emb = gcl::EmbedderSpec::seeded(128, 64, 7);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<gcl::TokenId> tok(8, 127);
  std::vector<gcl::TokenId> y(len), g(len);
  for (auto& t : y) t = tok(rng);
  for (auto& t : g) t = tok(rng);
  for (auto _ : state) benchmark::DoNotOptimize(gcl::token_f1(y, g, emb));
}
BENCHMARK(BM_TokenF1)->Arg(4)->Arg(32);

}  // namespace
