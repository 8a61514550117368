#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "gcl/error.hpp"
#include "gcl/optimizer.hpp"

namespace {

TEST(Schedule, WarmupThenCosine) {
  const gcl::ScheduleConfig s{1e-3, 100, 0.1};
  EXPECT_EQ(gcl::lr_schedule(0, s), 0.0);
  EXPECT_NEAR(gcl::lr_schedule(5, s), 5e-4, 1e-18);
  EXPECT_NEAR(gcl::lr_schedule(10, s), 1e-3, 1e-18);
  EXPECT_NEAR(gcl::lr_schedule(55, s), 5e-4, 1e-16);
  EXPECT_NEAR(gcl::lr_schedule(100, s), 0.0, 1e-18);
  EXPECT_THROW(gcl::lr_schedule(101, s), gcl::UsageError);
}

TEST(Schedule, ContinuousAtWarmupBoundary) {
  const gcl::ScheduleConfig s{1e-3, 1000, 0.1};
  const double before = gcl::lr_schedule(99, s);
  const double at = gcl::lr_schedule(100, s);
  const double after = gcl::lr_schedule(101, s);
  EXPECT_NEAR(at - before, 1e-5, 1e-12);
  EXPECT_LT(at - after, 1e-5);
  for (std::size_t t = 100; t < 1000; ++t) {
    EXPECT_GE(gcl::lr_schedule(t, s), gcl::lr_schedule(t + 1, s));
  }
}

TEST(Schedule, NoWarmup) {
  const gcl::ScheduleConfig s{2e-5, 10, 0.0};
  EXPECT_DOUBLE_EQ(gcl::lr_schedule(0, s), 2e-5);
}

TEST(Schedule, ValidateRejectsBadConfig) {
  EXPECT_THROW((gcl::ScheduleConfig{1e-3, 0, 0.1}.validate()), gcl::ConfigError);
  EXPECT_THROW((gcl::ScheduleConfig{-1.0, 10, 0.1}.validate()), gcl::ConfigError);
  EXPECT_THROW((gcl::ScheduleConfig{1e-3, 10, 1.0}.validate()), gcl::ConfigError);
}

TEST(AdamW, TwoStepsMatchReference) {
  gcl::Tensor p = gcl::Tensor::vector({1.0, -2.0}, true);
  std::vector<gcl::Tensor*> params{&p};
  auto state = gcl::OptimizerState::for_params(std::vector<const gcl::Tensor*>{&p});
  p.grad()[0] = 0.5;
  p.grad()[1] = 0.25;
  gcl::adamw_step(state, params, 0.1);
  EXPECT_NEAR(p[0], 0.899000002, 1e-12);
  EXPECT_NEAR(p[1], -2.097999996, 1e-12);
  p.grad()[0] = -1.0;
  p.grad()[1] = 0.5;
  gcl::adamw_step(state, params, 0.1);
  EXPECT_NEAR(p[0], 0.9347113542385653, 1e-12);
  EXPECT_NEAR(p[1], -2.1924201961448047, 1e-12);
  EXPECT_EQ(state.step, 2u);
}

TEST(AdamW, RejectsLayoutMismatch) {
  gcl::Tensor p = gcl::Tensor::vector({1.0}, true);
  gcl::Tensor q = gcl::Tensor::vector({1.0, 2.0}, true);
  auto state = gcl::OptimizerState::for_params(std::vector<const gcl::Tensor*>{&p});
  std::vector<gcl::Tensor*> wrong{&q};
  EXPECT_THROW(gcl::adamw_step(state, wrong, 0.1), gcl::UsageError);
}

TEST(Clip, RescalesOnlyAboveThreshold) {
  gcl::Tensor a = gcl::Tensor::vector({0.0, 0.0}, true);
  gcl::Tensor b = gcl::Tensor::vector({0.0}, true);
  a.grad()[0] = 3.0;
  b.grad()[0] = 4.0;
  std::vector<gcl::Tensor*> params{&a, &b};
  EXPECT_DOUBLE_EQ(gcl::clip_grad_norm(params, 10.0), 5.0);
  EXPECT_DOUBLE_EQ(a.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(gcl::clip_grad_norm(params, 1.0), 5.0);
  EXPECT_NEAR(gcl::grad_norm(params), 1.0, 1e-15);
  gcl::zero_grads(params);
  EXPECT_EQ(gcl::grad_norm(params), 0.0);
}

}  // namespace
