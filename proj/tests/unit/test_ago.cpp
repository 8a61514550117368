#include <array>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "gcl/ago.hpp"
#include "gcl/error.hpp"
#include "gcl/harness/dataset.hpp"

namespace {

struct GroupRow {
  std::string name;
  double score_l, score_g;
  double cap_l, cap_g;  // billions of parameters
  double tau_l, tau_g;
  gcl::Regime regime;
};

class TableGroups : public ::testing::TestWithParam<GroupRow> {};

TEST_P(TableGroups, AllocationMatches) {
  const GroupRow& r = GetParam();
  const std::array<std::size_t, 2> caps{static_cast<std::size_t>(r.cap_l * 1e9),
                                        static_cast<std::size_t>(r.cap_g * 1e9)};
  const auto roles = gcl::assign_roles({r.score_l, r.score_g}, caps);
  EXPECT_EQ(roles.learner, 0u);
  EXPECT_EQ(roles.guide, 1u);
  EXPECT_EQ(roles.tau_learner, r.tau_l);
  EXPECT_EQ(roles.tau_guide, r.tau_g);
  EXPECT_EQ(roles.eta_learner, 1e-5);
  EXPECT_EQ(roles.eta_guide, 5e-6);
  EXPECT_EQ(roles.regime, r.regime);
}

using R = gcl::Regime;
INSTANTIATE_TEST_SUITE_P(
    Groups, TableGroups,
    ::testing::Values(GroupRow{"q3_2b_q3_4b", 0.797, 0.816, 2, 4, 3, 2, R::reshaping},
                      GroupRow{"q25_3b_q3_4b", 0.692, 0.816, 3, 4, 3, 2, R::reshaping},
                      GroupRow{"q25_3b_q25_7b", 0.692, 0.777, 3, 7, 3, 2, R::reshaping},
                      GroupRow{"q25_3b_8b", 0.692, 0.755, 3, 8, 3, 2, R::reshaping},
                      GroupRow{"q3_2b_q3_2b", 0.797, 0.797, 2, 2, 3, 2, R::homogeneous},
                      GroupRow{"q25_3b_q25_3b", 0.692, 0.692, 3, 3, 3, 2, R::homogeneous},
                      GroupRow{"q25_3b_q3_2b", 0.692, 0.797, 3, 2, 2, 3, R::extraction},
                      GroupRow{"q25_7b_q3_2b", 0.777, 0.797, 7, 2, 2, 3, R::extraction},
                      GroupRow{"q3_8b_q3_2b", 0.755, 0.797, 8, 2, 2, 3, R::extraction},
                      GroupRow{"q25_7b_q3_4b", 0.777, 0.816, 7, 4, 2, 3, R::extraction},
                      GroupRow{"q3_8b_q3_4b", 0.755, 0.816, 8, 4, 2, 3, R::extraction},
                      GroupRow{"q3_8b_q25_7b", 0.755, 0.777, 8, 7, 2, 3, R::extraction}),
    [](const auto& info) { return info.param.name; });

TEST(AssignRoles, LowerScoreLearnsRegardlessOfOrder) {
  const auto roles = gcl::assign_roles({0.9, 0.6}, {100, 200});
  EXPECT_EQ(roles.learner, 1u);
  EXPECT_EQ(roles.guide, 0u);
  EXPECT_EQ(roles.tau_for(0), 3.0);
  EXPECT_EQ(roles.tau_for(1), 2.0);
  EXPECT_EQ(roles.regime, R::extraction);
  EXPECT_EQ(roles.eta_for(1), 1e-5);
}

TEST(AssignRoles, CustomPolicy) {
  const gcl::RolePolicy p{2e-3, 1e-3, 1.5, 4.0};
  const auto roles = gcl::assign_roles({0.1, 0.2}, {10, 20}, p);
  EXPECT_EQ(roles.eta_learner, 2e-3);
  EXPECT_EQ(roles.tau_learner, 4.0);
  EXPECT_EQ(roles.tau_guide, 1.5);
}

TEST(AssignRoles, RegimeNames) {
  EXPECT_EQ(gcl::to_string(R::reshaping), "A");
  EXPECT_EQ(gcl::to_string(R::extraction), "B");
  EXPECT_EQ(gcl::to_string(R::homogeneous), "homogeneous");
}

gcl::Batch small_batch(std::uint64_t seed, std::size_t n, const gcl::VocabSpec& vocab) {
  gcl::GenKnobs knobs;
  knobs.rows = 4;
  knobs.cols = 4;
  const auto ds = gcl::generate_dataset(seed, n, 1, knobs);
  return gcl::to_examples(ds.train, vocab);
}

TEST(TrainStep, SupervisedOnlyDecouplesMembers) {
  gcl::VocabSpec vocab;
  const gcl::ModelConfig ca{1, 16, 2, 128, 96, 2, false};
  const gcl::ModelConfig cb{2, 24, 2, 128, 96, 2, false};
  const gcl::ScheduleConfig sched{1e-3, 10, 0.1};
  gcl::CompetitiveGroup group{{gcl::Competitor::create(ca, 1, 8, 0, sched),
                               gcl::Competitor::create(cb, 2, 8, 1, sched)},
                              gcl::assign_roles({0.2, 0.4}, {gcl::capacity(ca), gcl::capacity(cb)},
                                                {1e-3, 5e-4, 2.0, 3.0}),
                              vocab};
  auto solo_a = gcl::Competitor::create(ca, 1, 8, 0, {1e-3, 10, 0.1});
  auto solo_b = gcl::Competitor::create(cb, 2, 8, 1, {5e-4, 10, 0.1});
  gcl::StepOptions opts;
  opts.objective.weights = {1.0, 0.0, 0.0};
  const auto batch = small_batch(3, 4, vocab);
  for (std::uint64_t t = 0; t < 10; ++t) {
    gcl::gcl_train_step(group, batch, opts);
    gcl::sft_train_step(solo_a, t, batch, vocab);
    gcl::sft_train_step(solo_b, t, batch, vocab);
  }
  EXPECT_EQ(group.step, 10u);
  EXPECT_EQ(gcl::param_checksum(group.members[0].model), gcl::param_checksum(solo_a.model));
  EXPECT_EQ(gcl::param_checksum(group.members[1].model), gcl::param_checksum(solo_b.model));
}

TEST(TrainStep, FullObjectiveCouplesMembers) {
  gcl::VocabSpec vocab;
  const gcl::ModelConfig ca{1, 16, 2, 128, 96, 2, false};
  const gcl::ScheduleConfig sched{1e-3, 4, 0.0};
  gcl::CompetitiveGroup group{{gcl::Competitor::create(ca, 1, 8, 0, sched),
                               gcl::Competitor::create(ca, 2, 8, 1, sched)},
                              gcl::assign_roles({0.2, 0.4}, {1, 1}, {1e-3, 1e-3, 2.0, 3.0}),
                              vocab};
  auto solo = gcl::Competitor::create(ca, 1, 8, 0, sched);
  const auto batch = small_batch(4, 4, vocab);
  const auto report = gcl::gcl_train_step(group, batch, {});
  gcl::sft_train_step(solo, 0, batch, vocab);
  EXPECT_GT(report.loss.gsl, 0.0);
  EXPECT_GT(report.loss.drl, 0.0);
  EXPECT_NE(gcl::param_checksum(group.members[0].model), gcl::param_checksum(solo.model));
}

TEST(TrainStep, EmptyBatchThrows) {
  gcl::VocabSpec vocab;
  auto solo = gcl::Competitor::create({1, 16, 2, 128, 96, 2, false}, 1, 8, 0, {});
  EXPECT_THROW(gcl::sft_train_step(solo, 0, {}, vocab), gcl::InputError);
}

}  // namespace
