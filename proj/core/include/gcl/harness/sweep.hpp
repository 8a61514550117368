#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gcl/harness/config.hpp"
#include "gcl/harness/runner.hpp"

namespace gcl {

struct SweepRow {
  std::string cell;
  std::vector<std::pair<std::string, std::string>> coords;
  std::string run_id;
  std::optional<RoleAssignment> roles;
  std::array<MetricsRow, 2> final{};
  bool failed = false;
  std::string message;

  double learner_f1() const;
  double guide_f1() const;
};

struct SweepResult {
  std::string kind;
  std::vector<std::string> coord_names;
  std::vector<SweepRow> rows;

  std::size_t failures() const;
  // Header plus one line per row, in request order.
  std::string csv() const;
};

// Override lines realizing the standard symmetric setting (eta_sft for both
// members, tau_standard for both) through the role-assignment path.
std::vector<std::string> standard_setting_overrides(const RunConfig& base);

// One run_gcl per ratio with eta_learner = r * eta_guide. Requires SFT scores
// in base. Failed cells become flagged rows.
SweepResult sweep_lr_ratio(const RunConfig& base, const Dataset& dataset,
                           std::span<const double> ratios);

// One run_gcl per (tau_learner, tau_guide) pair of the cross product.
SweepResult sweep_temperature(const RunConfig& base, const Dataset& dataset,
                              std::span<const double> tau_learner,
                              std::span<const double> tau_guide);

// One run_gcl per setting. Runs run_sft first when base carries no SFT
// scores and uses its final Action-F1 for role assignment; sft, when
// non-null, receives that report.
SweepResult ablate_weights(const RunConfig& base, const Dataset& dataset,
                           std::span<const AblationSetting> settings,
                           RunReport* sft = nullptr);

// Writes sweep.csv under dir and returns its path.
std::filesystem::path write_sweep(const SweepResult& result, const std::filesystem::path& dir);

}  // namespace gcl
