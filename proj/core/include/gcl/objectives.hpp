#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gcl/graph.hpp"
#include "gcl/model.hpp"
#include "gcl/tensor.hpp"

namespace gcl {

// Weights of the supervised, global-semantic and distributional terms.
struct LossWeights {
  double lambda_sup = 1.0;
  double lambda_gsl = 0.5;
  double lambda_drl = 0.4;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

// Learnable attention pooling (query) plus projection into the shared
// semantic space. One head per group member.
struct PoolingHead {
  Tensor query;       // d
  Tensor projection;  // d x d_proj
  std::size_t owner = 0;

  static PoolingHead init(std::size_t d_model, std::size_t d_proj,
                          std::size_t owner, std::uint64_t seed);
  std::size_t size() const { return query.size() + projection.size(); }
  std::size_t d_proj() const { return projection.shape().at(1); }
  std::vector<Tensor*> tensors() { return {&query, &projection}; }
  std::vector<const Tensor*> tensors() const { return {&query, &projection}; }
};

// Two full-vocabulary distributions at their temperatures and their mixture.
struct DistributionPair {
  std::vector<double> p_a;
  std::vector<double> p_b;
  std::vector<double> mixture;  // (p_a + p_b) / 2
  double tau_a = 1.0;
  double tau_b = 1.0;

  static DistributionPair from_probs(std::vector<double> p_a,
                                     std::vector<double> p_b, double tau_a = 1.0,
                                     double tau_b = 1.0);
  static DistributionPair from_logits(std::span<const double> z_a,
                                      std::span<const double> z_b,
                                      double tau_a, double tau_b);
  void validate() const;
  // V_i = p_b_i / (p_a_i + p_b_i), the cross model's share of the mixture.
  std::vector<double> cross_share() const;
};

struct LossBreakdown {
  double sup_a = 0.0;
  double sup_b = 0.0;
  double gsl = 0.0;
  double drl = 0.0;
  double drl_unscaled = 0.0;  // same distributions, 1/2 weights
  double total = 0.0;
  std::vector<double> drl_per_position;
  LossWeights weights;
};

// --- supervised -----------------------------------------------------------

// Mean over masked rows of -log softmax(logits_t)[labels_t]. logits: [L x V].
double supervised_loss(const Tensor& logits, std::span<const TokenId> labels,
                       const std::vector<bool>& mask);
Var supervised_loss(Var logits, std::span<const std::size_t> rows,
                    std::span<const TokenId> labels);

// --- global semantic --------------------------------------------------------

std::vector<double> attention_pool(const Tensor& hidden, const PoolingHead& head);
std::vector<double> project_normalize(std::span<const double> z,
                                      const PoolingHead& head);

// InfoNCE between index-aligned unit vectors using cross-model negatives.
// symmetric averages the A-anchored and B-anchored directions.
double gsl_loss(const std::vector<std::vector<double>>& zbar_a,
                const std::vector<std::vector<double>>& zbar_b, double tau,
                bool symmetric = true);
// zbar_a, zbar_b: [B x d_proj] unit rows.
Var gsl_loss(Var zbar_a, Var zbar_b, double tau, bool symmetric = true);

// --- distributional ---------------------------------------------------------

// Unscaled: KL(P_A||M)/2 + KL(P_B||M)/2.
// Scaled:   tau_a^2/2 KL(P_A||M) + tau_b^2/2 KL(P_B||M).
double drl_loss(const DistributionPair& pair, bool scaled);
// Mean over rows of the per-row DRL of temperature softmaxes of two [n x V]
// logit blocks. per_row, when non-null, receives the row values; unscaled
// receives the mean of KL(P_A||M)/2 + KL(P_B||M)/2 at the same temperatures.
Var drl_loss(Var logits_a, Var logits_b, double tau_a, double tau_b,
             bool scaled, std::vector<double>* per_row = nullptr,
             double* unscaled = nullptr);

struct DrlGradient {
  std::vector<double> grad_a;
  std::vector<double> grad_b;
  // Per-coordinate basic-alignment and shift-force pieces of grad_a / grad_b,
  // before their coefficients: P_i(log(P_i/M_i) - KL) and P_i(V_i - E_P[V]).
  std::vector<double> alignment_a, shift_a;
  std::vector<double> alignment_b, shift_b;
};

// Closed-form gradient of the scaled DRL with respect to both logit vectors:
//   dL/dz_A,i = tau_A/2 P_A,i (log(P_A,i/M_i) - KL(P_A||M))
//             - (tau_B^2 - tau_A^2)/(2 tau_A) P_A,i (V_i - E_{P_A}[V])
// with V_i = P_B,i / (P_A,i + P_B,i); symmetric for z_B.
DrlGradient drl_grad_closed_form(std::span<const double> z_a,
                                 std::span<const double> z_b, double tau_a,
                                 double tau_b);

// --- group objective --------------------------------------------------------

struct GcoOptions {
  LossWeights weights;
  double tau_gsl = 0.07;
  double tau_a = 1.0;
  double tau_b = 1.0;
  bool scaled_drl = true;
  bool symmetric_gsl = true;
};

// Graph nodes of one member's teacher-forced pass plus its semantic vectors.
struct MemberPass {
  GraphForward forward;
  Var semantic;  // [B x d_proj] unit rows
};

// Runs model + head on the batch inside graph.
MemberPass encode(Graph& graph, ModelParams& params, PoolingHead& head,
                  const Batch& batch, const VocabSpec& vocab);

struct GcoResult {
  Var total;
  Var sup_a, sup_b, gsl, drl;
  LossBreakdown breakdown;
};

// Builds the weighted objective from both members' passes over the same batch.
GcoResult gco_loss(const MemberPass& a, const MemberPass& b, const Batch& batch,
                   const VocabSpec& vocab, const GcoOptions& options);

// Masked row indices (into the stacked batch) and their next-token labels.
struct TargetRows {
  std::vector<std::size_t> rows;
  std::vector<TokenId> labels;
};
TargetRows target_rows(const Batch& batch, const VocabSpec& vocab);

}  // namespace gcl
