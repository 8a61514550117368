#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "gcl/error.hpp"
#include "gcl/numerics.hpp"

namespace {

TEST(Softmax, MatchesReferenceValues) {
  const std::vector<double> z{1.0, 2.0, 3.0};
  const auto p = gcl::softmax_temp(z, 2.0);
  EXPECT_NEAR(p[0], 0.1863237232258476, 1e-15);
  EXPECT_NEAR(p[1], 0.3071958857184984, 1e-15);
  EXPECT_NEAR(p[2], 0.506480391055654, 1e-15);
}

TEST(Softmax, StableForHugeLogits) {
  const std::vector<double> z{1000.0, 1000.0, -1000.0};
  const auto p = gcl::softmax_temp(z, 1.0);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
  EXPECT_EQ(p[2], 0.0);
}

TEST(Softmax, RejectsBadInput) {
  const std::vector<double> z{0.0, 1.0};
  EXPECT_THROW(gcl::softmax_temp(z, 0.0), gcl::DomainError);
  EXPECT_THROW(gcl::softmax_temp(z, -1.0), gcl::DomainError);
  const std::vector<double> bad{0.0, std::numeric_limits<double>::quiet_NaN()};
  EXPECT_THROW(gcl::softmax_temp(bad, 1.0), gcl::InputError);
}

TEST(KlDivergence, ReferenceValue) {
  const std::vector<double> p{0.5, 0.5};
  const std::vector<double> q{0.9, 0.1};
  EXPECT_NEAR(gcl::kl_div(p, q), 0.5108256237659907, 1e-15);
  EXPECT_EQ(gcl::kl_div(p, p), 0.0);
}

TEST(KlDivergence, ZeroMassTermsVanish) {
  const std::vector<double> p{1.0, 0.0};
  const std::vector<double> q{0.5, 0.5};
  EXPECT_NEAR(gcl::kl_div(p, q), std::log(2.0), 1e-11);
}

TEST(KlDivergence, FiniteWhenSupportDiffers) {
  const std::vector<double> p{0.5, 0.5};
  const std::vector<double> q{1.0, 0.0};
  const double kl = gcl::kl_div(p, q);
  EXPECT_TRUE(std::isfinite(kl));
  EXPECT_GT(kl, 10.0);
}

TEST(KlDivergence, RejectsMismatch) {
  const std::vector<double> p{0.5, 0.5};
  const std::vector<double> q{0.2, 0.3, 0.5};
  EXPECT_THROW(gcl::kl_div(p, q), gcl::ShapeError);
  const std::vector<double> notdist{0.5, 0.6};
  EXPECT_THROW(gcl::kl_div(notdist, p), gcl::InputError);
}

TEST(FloorRenormalize, LeavesSafeVectorsAlone) {
  const std::vector<double> p{0.25, 0.75};
  EXPECT_EQ(gcl::floor_renormalize(p), p);
}

TEST(FloorRenormalize, ClampsAndSumsToOne) {
  const std::vector<double> p{1.0, 0.0, 0.0};
  const auto out = gcl::floor_renormalize(p);
  double sum = 0.0;
  for (double x : out) {
    EXPECT_GT(x, 0.0);
    sum += x;
  }
  EXPECT_NEAR(sum, 1.0, 1e-15);
}

}  // namespace
