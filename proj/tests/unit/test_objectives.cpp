#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gcl/error.hpp"
#include "gcl/graph.hpp"
#include "gcl/numerics.hpp"
#include "gcl/objectives.hpp"
#include "gcl/selfcheck.hpp"

namespace {

const std::vector<double> kZa{1.0, 2.0, 0.5, -1.0};
const std::vector<double> kZb{0.0, -0.5, 1.5, 0.25};

struct DrlOracle {
  double tau_a, tau_b, unscaled, scaled;
};

class DrlReference : public ::testing::TestWithParam<DrlOracle> {};

TEST_P(DrlReference, MatchesIndependentValues) {
  const DrlOracle o = GetParam();
  const auto pair = gcl::DistributionPair::from_logits(kZa, kZb, o.tau_a, o.tau_b);
  EXPECT_NEAR(gcl::drl_loss(pair, false), o.unscaled, 1e-14);
  EXPECT_NEAR(gcl::drl_loss(pair, true), o.scaled, 1e-14);
}

INSTANTIATE_TEST_SUITE_P(Taus, DrlReference,
                         ::testing::Values(DrlOracle{1, 1, 0.22792375974334628, 0.22792375974334628},
                                           DrlOracle{2, 3, 0.05286719422457667, 0.34470818091046307},
                                           DrlOracle{3, 2, 0.04594428912470917, 0.29522607837422643}));

TEST(Drl, IdenticalDistributionsGiveZero) {
  const auto pair = gcl::DistributionPair::from_logits(kZa, kZa, 2.0, 2.0);
  EXPECT_NEAR(gcl::drl_loss(pair, true), 0.0, 1e-15);
}

TEST(Drl, UnscaledBoundedByLogTwo) {
  const std::vector<double> p{1.0, 0.0};
  const std::vector<double> q{0.0, 1.0};
  const auto pair = gcl::DistributionPair::from_probs(p, q);
  EXPECT_NEAR(gcl::drl_loss(pair, false), std::log(2.0), 1e-9);
}

TEST(Drl, DegeneracyIdentityAcrossTaus) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 2.0);
  for (double tau : {1.0, 2.0, 3.0}) {
    for (int i = 0; i < 20; ++i) {
      std::vector<double> a(16), b(16);
      for (auto& x : a) x = n(rng);
      for (auto& x : b) x = n(rng);
      const auto pair = gcl::DistributionPair::from_logits(a, b, tau, tau);
      EXPECT_NEAR(gcl::drl_loss(pair, true), tau * tau * gcl::drl_loss(pair, false), 1e-12);
    }
  }
}

TEST(Drl, ShiftForceIsMeanCentered) {
  const auto g = gcl::drl_grad_closed_form(kZa, kZb, 2.0, 3.0);
  const double sa = std::accumulate(g.shift_a.begin(), g.shift_a.end(), 0.0);
  const double sb = std::accumulate(g.shift_b.begin(), g.shift_b.end(), 0.0);
  EXPECT_NEAR(sa, 0.0, 1e-15);
  EXPECT_NEAR(sb, 0.0, 1e-15);
}

TEST(Drl, ClosedFormGradientSumsToZero) {
  // Softmax logits are shift invariant, so the gradient is orthogonal to 1.
  const auto g = gcl::drl_grad_closed_form(kZa, kZb, 3.0, 2.0);
  EXPECT_NEAR(std::accumulate(g.grad_a.begin(), g.grad_a.end(), 0.0), 0.0, 1e-15);
  EXPECT_NEAR(std::accumulate(g.grad_b.begin(), g.grad_b.end(), 0.0), 0.0, 1e-15);
}

TEST(Drl, EqualTausDropShiftForce) {
  const auto g = gcl::drl_grad_closed_form(kZa, kZb, 2.0, 2.0);
  for (std::size_t i = 0; i < kZa.size(); ++i) {
    EXPECT_NEAR(g.grad_a[i], 1.0 * g.alignment_a[i], 1e-15);
  }
}

TEST(Drl, ClosedFormMatchesFiniteDifferences) {
  const double taus[] = {2.0, 3.0};
  const auto r = gcl::check_drl_closed_form(20, 32, taus, 3);
  EXPECT_EQ(r.pairs, 20u);
  EXPECT_LT(r.max_rel_err, 1e-6);
  EXPECT_LT(r.max_abs_err, 1e-9);
}

TEST(Drl, GraphMatchesScalarVersion) {
  gcl::Graph g(false);
  gcl::Var a = g.constant(gcl::Tensor({1, 4}, kZa));
  gcl::Var b = g.constant(gcl::Tensor({1, 4}, kZb));
  double unscaled = 0.0;
  gcl::Var loss = gcl::drl_loss(a, b, 2.0, 3.0, true, nullptr, &unscaled);
  EXPECT_NEAR(loss.value().item(), 0.34470818091046307, 1e-14);
  EXPECT_NEAR(unscaled, 0.05286719422457667, 1e-14);
}

TEST(Drl, RejectsBadTemperature) {
  EXPECT_THROW(gcl::DistributionPair::from_logits(kZa, kZb, 0.0, 1.0), gcl::DomainError);
  EXPECT_THROW(gcl::drl_grad_closed_form(kZa, kZb, 1.0, -2.0), gcl::DomainError);
}

TEST(Supervised, UniformLogitsGiveLogVocab) {
  const std::size_t vocab = 128;
  gcl::Tensor logits = gcl::Tensor::zeros({3, vocab});
  const std::vector<gcl::TokenId> labels{5, 17, 127};
  const std::vector<bool> mask{true, true, true};
  EXPECT_NEAR(gcl::supervised_loss(logits, labels, mask), std::log(128.0), 1e-12);
}

TEST(Supervised, MaskSelectsRows) {
  gcl::Tensor logits({2, 2}, {0.0, 0.0, 10.0, -10.0});
  const std::vector<gcl::TokenId> labels{0, 1};
  EXPECT_NEAR(gcl::supervised_loss(logits, labels, {true, false}), std::log(2.0), 1e-15);
  EXPECT_THROW(gcl::supervised_loss(logits, labels, {false, false}), gcl::InputError);
}

TEST(Gsl, MatchesIndependentValues) {
  const std::vector<std::vector<double>> a{{1.0, 0.0}, {0.0, 1.0}, {0.6, 0.8}};
  const std::vector<std::vector<double>> b{{0.6, 0.8}, {1.0, 0.0}, {0.0, -1.0}};
  EXPECT_NEAR(gcl::gsl_loss(a, b, 0.5, false), 2.352176799688648, 1e-13);
  EXPECT_NEAR(gcl::gsl_loss(a, b, 0.5, true), 2.1597925205997592, 1e-13);
}

TEST(Gsl, AlignedPairsBeatShuffled) {
  const std::vector<std::vector<double>> a{{1.0, 0.0}, {0.0, 1.0}};
  const std::vector<std::vector<double>> swapped{{0.0, 1.0}, {1.0, 0.0}};
  EXPECT_LT(gcl::gsl_loss(a, a, 0.07), gcl::gsl_loss(a, swapped, 0.07));
}

TEST(Gsl, RejectsBadInput) {
  const std::vector<std::vector<double>> a{{1.0, 0.0}};
  const std::vector<std::vector<double>> b{{1.0, 0.0}, {0.0, 1.0}};
  EXPECT_THROW(gcl::gsl_loss(a, b, 0.07), gcl::ShapeError);
  EXPECT_THROW(gcl::gsl_loss(a, a, 0.0), gcl::DomainError);
}

TEST(Components, AutodiffMatchesFiniteDifferences) {
  const auto r = gcl::check_gco_components(4, 9);
  EXPECT_LT(r.sup_rel_err, 1e-6);
  EXPECT_LT(r.gsl_rel_err, 1e-6);
  EXPECT_LT(r.drl_rel_err, 1e-6);
}

TEST(Weights, ValidateRejectsNegative) {
  gcl::LossWeights w;
  w.lambda_gsl = -0.1;
  EXPECT_THROW(w.validate(), gcl::ConfigError);
}

}  // namespace
