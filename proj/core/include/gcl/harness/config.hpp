#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gcl/ago.hpp"
#include "gcl/harness/dataset.hpp"
#include "gcl/model.hpp"
#include "gcl/objectives.hpp"

namespace gcl {

enum class RunMode { sft, gcl };

// One ablation row: loss weights plus whether AGO roles drive eta and tau.
// Non-AGO rows use the standard symmetric setting (eta_sft for both models,
// tau_standard for both).
struct AblationSetting {
  LossWeights weights;
  bool ago = false;

  std::string label() const;
  bool operator==(const AblationSetting&) const = default;
};

struct RunConfig {
  RunMode mode = RunMode::gcl;
  std::uint64_t seed = 0;

  // Data: a generated directory, or an in-memory dataset when data_dir is empty.
  std::string data_dir;
  std::uint64_t data_seed = 0;
  std::size_t n_train = 256;
  std::size_t n_test = 64;
  GenKnobs knobs;

  std::size_t vocab = 128;
  ModelConfig model_a{2, 64, 4, 128, 96, 4, false};
  ModelConfig model_b{4, 96, 4, 128, 96, 4, false};
  std::size_t d_proj = 32;

  LossWeights weights;
  bool scaled_drl = true;
  double tau_gsl = 0.07;
  bool symmetric_gsl = true;

  // Learning rates. eta_learner = lr_ratio * eta_guide. Every eta is multiplied
  // by lr_scale before use.
  double eta_sft = 1e-5;
  double eta_guide = 5e-6;
  double lr_ratio = 2.0;
  double lr_scale = 1.0;

  // Temperatures by capacity; tau_learner / tau_guide override when > 0.
  double tau_small = 3.0;
  double tau_large = 2.0;
  double tau_learner = 0.0;
  double tau_guide = 0.0;
  double tau_standard = 2.0;

  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double warmup_ratio = 0.1;
  double grad_clip = 1.0;
  double weight_decay = 0.01;

  // Role assignment inputs for gcl mode: a prior SFT report, or overrides.
  std::string sft_report;
  std::optional<double> sft_score_a;
  std::optional<double> sft_score_b;

  std::size_t embed_dim = 64;
  std::uint64_t embed_seed = 7;
  // Evaluate every k-th epoch (0: only the final epoch). The final epoch is
  // always evaluated.
  std::size_t eval_every = 1;

  std::string out_dir;
  bool save_checkpoints = true;

  // Sweep grids.
  std::vector<double> lr_ratios{1.0, 2.0, 3.0, 4.0};
  std::vector<double> tau_learner_grid{1.0, 2.0, 3.0};
  std::vector<double> tau_guide_grid{1.0, 2.0, 3.0};
  std::vector<AblationSetting> ablations;  // defaults: the five table rows

  // Byte-exact text this config was parsed from (file plus override lines).
  std::string source_text;

  void validate() const;
  VocabSpec vocab_spec() const;
  ModelConfig member_config(std::size_t k) const;
  StepOptions step_options() const;
};

std::vector<AblationSetting> default_ablations();

// Parses key = value lines ('#' comments, blank lines ignored; later keys
// win). Unknown keys and malformed values raise ConfigError.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::string>& overrides = {});
// Appends "key = value" override lines to a config text and reparses it.
RunConfig with_overrides(const RunConfig& base, const std::vector<std::string>& overrides);

// Every recognised key, in canonical order.
std::vector<std::string> config_keys();

// Canonical key = value serialization of every field (source_text excluded).
std::string serialize_config(const RunConfig& config);
// Hex hash of the canonical serialization with out_dir cleared, so the same
// experiment written to two places shares an id.
std::string run_id(const RunConfig& config);

std::string to_string(RunMode mode);

}  // namespace gcl
