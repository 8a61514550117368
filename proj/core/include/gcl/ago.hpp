#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gcl/model.hpp"
#include "gcl/objectives.hpp"
#include "gcl/optimizer.hpp"

namespace gcl {

enum class Regime {
  reshaping,   // learner capacity < guide capacity
  extraction,  // learner capacity > guide capacity
  homogeneous  // equal capacities
};

std::string to_string(Regime regime);

// Learning rates by role and temperatures by capacity.
struct RolePolicy {
  double eta_high = 1e-5;  // learner
  double eta_low = 5e-6;   // guide
  double tau_low = 2.0;    // larger model
  double tau_high = 3.0;   // smaller model
};

struct RoleAssignment {
  std::size_t learner = 0;
  std::size_t guide = 1;
  double eta_learner = 1e-5;
  double eta_guide = 5e-6;
  double tau_learner = 3.0;
  double tau_guide = 2.0;
  Regime regime = Regime::homogeneous;

  double eta_for(std::size_t member) const {
    return member == learner ? eta_learner : eta_guide;
  }
  double tau_for(std::size_t member) const {
    return member == learner ? tau_learner : tau_guide;
  }
  bool operator==(const RoleAssignment&) const = default;
};

// The lower SFT score becomes the learner (ties: member 0). The larger
// capacity takes tau_low (ties: the learner takes tau_high).
RoleAssignment assign_roles(std::array<double, 2> sft_scores,
                            std::array<std::size_t, 2> capacities,
                            const RolePolicy& policy = {});

// One group member: base model, its semantic head, and its own optimizer
// subspace and schedule.
struct Competitor {
  ModelParams model;
  PoolingHead head;
  OptimizerState optimizer;
  ScheduleConfig schedule;

  // Model tensors followed by head tensors.
  std::vector<Tensor*> trainable();
  std::vector<const Tensor*> trainable() const;

  static Competitor create(const ModelConfig& config, std::uint64_t seed,
                           std::size_t d_proj, std::size_t owner,
                           const ScheduleConfig& schedule,
                           const AdamWHyper& hyper = {});
};

struct StepOptions {
  GcoOptions objective;  // tau_a / tau_b are overwritten from the roles
  double grad_clip = 1.0;  // <= 0 disables clipping
};

struct CompetitiveGroup {
  std::array<Competitor, 2> members;
  RoleAssignment roles;
  VocabSpec vocab;
  std::uint64_t step = 0;
};

struct StepReport {
  std::uint64_t step = 0;
  LossBreakdown loss;
  std::array<double, 2> grad_norm{};
  std::array<double, 2> lr{};
};

// One joint step: both members run the same teacher-forced batch, the group
// objective is differentiated once, and each member is updated from its own
// optimizer state with its own scheduled rate, learner first. Throws
// NumericalError before touching parameters when the loss is not finite.
StepReport gcl_train_step(CompetitiveGroup& group, const Batch& batch,
                          const StepOptions& options);

// Independent supervised step for one model (heads untouched).
StepReport sft_train_step(Competitor& member, std::uint64_t step,
                          const Batch& batch, const VocabSpec& vocab,
                          double lambda_sup = 1.0, double grad_clip = 1.0);

// Evaluates the group objective without updating anything.
LossBreakdown evaluate_gco(CompetitiveGroup& group, const Batch& batch,
                           const GcoOptions& options);

}  // namespace gcl
