#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gcl/ago.hpp"
#include "gcl/harness/config.hpp"
#include "gcl/harness/dataset.hpp"
#include "gcl/metrics.hpp"
#include "gcl/objectives.hpp"

namespace gcl {

struct EpochLoss {
  std::size_t epoch = 0;
  LossBreakdown mean;
};

struct RunReport {
  std::string run_id;
  RunMode mode = RunMode::sft;
  std::string config_echo;
  std::string dataset_checksum;
  LossWeights weights;
  std::optional<RoleAssignment> roles;
  std::array<double, 2> sft_scores{};  // inputs to role assignment (gcl mode)
  std::array<std::size_t, 2> capacities{};
  // Per evaluated epoch, per member (index 0 = model_a).
  std::array<std::vector<MetricsRow>, 2> metrics;
  std::vector<EpochLoss> epoch_losses;
  LossBreakdown final_loss;
  std::size_t epochs_completed = 0;
  std::size_t steps = 0;
  std::array<std::string, 2> checkpoints;
  double wall_clock_s = 0.0;
  bool failed = false;
  std::string failure;
  std::filesystem::path dir;  // empty when nothing was written

  // Last evaluated row of member k; throws UsageError when none exists.
  const MetricsRow& final_metrics(std::size_t k) const;
};

// Trained members handed back to callers that need the parameters.
struct RunOutputs {
  std::vector<Competitor> members;
};

// Loads data_dir, or generates the dataset in memory from the data_* keys.
Dataset obtain_dataset(const RunConfig& config);

// Role assignment from SFT scores (sft_score_a/b overrides first, then the
// sft_report file) and model capacities; etas are scaled by lr_scale.
// Throws ConfigError when no scores are available.
RoleAssignment resolve_roles(const RunConfig& config);
RoleAssignment resolve_roles(const RunConfig& config, std::array<double, 2> sft_scores);
RolePolicy role_policy(const RunConfig& config);
// Same learner/guide as `roles` with the standard symmetric eta and tau.
RoleAssignment standard_roles(const RoleAssignment& roles, const RunConfig& config);

// Final Action-F1 of both members from a report.json written by run_sft.
std::array<double, 2> read_sft_scores(const std::filesystem::path& report_json);

// Independent supervised training of both members (lambda = (1, 0, 0),
// eta = eta_sft * lr_scale). Non-finite losses stop the run and flag the
// report instead of throwing.
RunReport run_sft(const RunConfig& config, const Dataset& dataset,
                  RunOutputs* outputs = nullptr);

// Joint training with the group objective. `roles` defaults to
// resolve_roles(config).
RunReport run_gcl(const RunConfig& config, const Dataset& dataset,
                  std::optional<RoleAssignment> roles = std::nullopt,
                  RunOutputs* outputs = nullptr);

// Dispatches on config.mode.
RunReport run(const RunConfig& config, const Dataset& dataset);

// Mean teacher-forced supervised loss of one model over examples.
double mean_supervised_loss(const ModelParams& params, std::span<const Example> examples,
                            const VocabSpec& vocab);

std::string metrics_csv_header();
std::string metrics_csv_row(const RunReport& report, std::size_t member,
                            const MetricsRow& row);

}  // namespace gcl
