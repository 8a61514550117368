#include "gcl/ago.hpp"

#include <cmath>
#include <sstream>

#include "gcl/error.hpp"
#include "gcl/graph.hpp"

namespace gcl {

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::reshaping: return "A";
    case Regime::extraction: return "B";
    case Regime::homogeneous: return "homogeneous";
  }
  return "?";
}

RoleAssignment assign_roles(std::array<double, 2> sft_scores,
                            std::array<std::size_t, 2> capacities,
                            const RolePolicy& policy) {
  for (double s : sft_scores) {
    if (!std::isfinite(s)) throw InputError("assign_roles: non-finite SFT score");
  }
  RoleAssignment r;
  r.learner = sft_scores[1] < sft_scores[0] ? 1 : 0;
  r.guide = 1 - r.learner;
  r.eta_learner = policy.eta_high;
  r.eta_guide = policy.eta_low;

  const std::size_t cap_l = capacities[r.learner];
  const std::size_t cap_g = capacities[r.guide];
  if (cap_l < cap_g) {
    r.regime = Regime::reshaping;
    r.tau_learner = policy.tau_high;
    r.tau_guide = policy.tau_low;
  } else if (cap_l > cap_g) {
    r.regime = Regime::extraction;
    r.tau_learner = policy.tau_low;
    r.tau_guide = policy.tau_high;
  } else {
    r.regime = Regime::homogeneous;
    r.tau_learner = policy.tau_high;
    r.tau_guide = policy.tau_low;
  }
  return r;
}

std::vector<Tensor*> Competitor::trainable() {
  std::vector<Tensor*> out = model.tensors();
  for (Tensor* t : head.tensors()) out.push_back(t);
  return out;
}

std::vector<const Tensor*> Competitor::trainable() const {
  std::vector<const Tensor*> out = model.tensors();
  for (const Tensor* t : head.tensors()) out.push_back(t);
  return out;
}

Competitor Competitor::create(const ModelConfig& config, std::uint64_t seed,
                              std::size_t d_proj, std::size_t owner,
                              const ScheduleConfig& schedule,
                              const AdamWHyper& hyper) {
  schedule.validate();
  Competitor c{init_model(config, seed),
               PoolingHead::init(config.d_model, d_proj, owner, seed ^ 0x9e3779b97f4a7c15ULL),
               {},
               schedule};
  const auto params = c.trainable();
  c.optimizer = OptimizerState::for_params(
      std::vector<const Tensor*>(params.begin(), params.end()), hyper);
  for (Tensor* t : params) t->set_requires_grad(true);
  return c;
}

namespace {

void require_finite(const LossBreakdown& loss, std::uint64_t step) {
  if (std::isfinite(loss.total)) return;
  std::ostringstream msg;
  msg << "non-finite loss at step " << step << ": total=" << loss.total
      << " sup_a=" << loss.sup_a << " sup_b=" << loss.sup_b
      << " gsl=" << loss.gsl << " drl=" << loss.drl;
  throw NumericalError(msg.str());
}

double update_member(Competitor& member, double eta, double clip) {
  const auto params = member.trainable();
  const double norm = clip_grad_norm(params, clip);
  if (!std::isfinite(norm)) {
    throw NumericalError("non-finite gradient norm for model " +
                         std::to_string(member.head.owner));
  }
  adamw_step(member.optimizer, params, eta);
  return norm;
}

}  // namespace

LossBreakdown evaluate_gco(CompetitiveGroup& group, const Batch& batch,
                           const GcoOptions& options) {
  Graph graph(false);
  auto& [a, b] = group.members;
  const MemberPass pa = encode(graph, a.model, a.head, batch, group.vocab);
  const MemberPass pb = encode(graph, b.model, b.head, batch, group.vocab);
  return gco_loss(pa, pb, batch, group.vocab, options).breakdown;
}

StepReport gcl_train_step(CompetitiveGroup& group, const Batch& batch,
                          const StepOptions& options) {
  if (batch.empty()) throw InputError("gcl_train_step: empty batch");
  auto& members = group.members;
  const RoleAssignment& roles = group.roles;

  StepReport report;
  report.step = group.step;
  for (std::size_t k = 0; k < 2; ++k) {
    ScheduleConfig sched = members[k].schedule;
    sched.eta_peak = roles.eta_for(k);
    report.lr[k] = lr_schedule(group.step, sched);
  }

  for (auto& m : members) zero_grads(m.trainable());

  GcoOptions objective = options.objective;
  objective.tau_a = roles.tau_for(0);
  objective.tau_b = roles.tau_for(1);

  Graph graph(true);
  const MemberPass pa = encode(graph, members[0].model, members[0].head, batch, group.vocab);
  const MemberPass pb = encode(graph, members[1].model, members[1].head, batch, group.vocab);
  GcoResult result = gco_loss(pa, pb, batch, group.vocab, objective);
  report.loss = std::move(result.breakdown);
  require_finite(report.loss, group.step);

  graph.backward(result.total);

  for (std::size_t k : {roles.learner, roles.guide}) {
    report.grad_norm[k] = update_member(members[k], report.lr[k], options.grad_clip);
  }
  ++group.step;
  return report;
}

StepReport sft_train_step(Competitor& member, std::uint64_t step,
                          const Batch& batch, const VocabSpec& vocab,
                          double lambda_sup, double grad_clip) {
  if (batch.empty()) throw InputError("sft_train_step: empty batch");
  StepReport report;
  report.step = step;
  const std::size_t self = member.head.owner == 1 ? 1 : 0;
  report.lr[self] = lr_schedule(step, member.schedule);

  zero_grads(member.trainable());

  Graph graph(true);
  std::vector<std::vector<TokenId>> sequences;
  sequences.reserve(batch.size());
  for (const Example& ex : batch) sequences.push_back(ex.inputs(vocab));
  const GraphForward fwd = forward(graph, member.model, sequences);
  const TargetRows targets = target_rows(batch, vocab);
  Var sup = supervised_loss(fwd.logits, targets.rows, targets.labels);
  Var total = ag::scale(sup, lambda_sup);

  LossBreakdown& bd = report.loss;
  bd.weights = LossWeights{lambda_sup, 0.0, 0.0};
  (self == 0 ? bd.sup_a : bd.sup_b) = sup.value().item();
  bd.total = total.value().item();
  require_finite(bd, step);

  graph.backward(total);
  report.grad_norm[self] = update_member(member, report.lr[self], grad_clip);
  return report;
}

}  // namespace gcl
