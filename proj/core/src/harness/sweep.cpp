#include "gcl/harness/sweep.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "gcl/error.hpp"

namespace gcl {
namespace {

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

std::string csv_safe(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

void require_scores(const RunConfig& base, const char* what) {
  if (!(base.sft_score_a && base.sft_score_b) && base.sft_report.empty()) {
    throw ConfigError(std::string(what) + " needs SFT scores for role assignment");
  }
}

SweepRow run_cell(const RunConfig& base, const Dataset& dataset, std::string cell,
                  std::vector<std::pair<std::string, std::string>> coords,
                  const std::vector<std::string>& overrides) {
  SweepRow row;
  row.cell = std::move(cell);
  row.coords = std::move(coords);
  try {
    const RunConfig config = with_overrides(base, overrides);
    config.validate();
    row.run_id = run_id(config);
    const RunReport report = run_gcl(config, dataset);
    row.roles = report.roles;
    if (report.failed) {
      row.failed = true;
      row.message = report.failure;
    }
    for (std::size_t k = 0; k < 2; ++k) {
      if (!report.metrics[k].empty()) row.final[k] = report.final_metrics(k);
    }
  } catch (const Error& e) {
    row.failed = true;
    row.message = e.what();
  }
  return row;
}

}  // namespace

double SweepRow::learner_f1() const {
  if (!roles) throw UsageError("sweep row " + cell + " has no role assignment");
  return final[roles->learner].action_f1;
}

double SweepRow::guide_f1() const {
  if (!roles) throw UsageError("sweep row " + cell + " has no role assignment");
  return final[roles->guide].action_f1;
}

std::size_t SweepResult::failures() const {
  return static_cast<std::size_t>(
      std::count_if(rows.begin(), rows.end(), [](const SweepRow& r) { return r.failed; }));
}

std::string SweepResult::csv() const {
  std::ostringstream ss;
  ss << "sweep,cell";
  for (const auto& name : coord_names) ss << ',' << name;
  ss << ",run_id,learner,guide,regime,eta_learner,eta_guide,tau_learner,tau_guide,"
        "learner_f1,guide_f1,model_a_f1,model_b_f1,learner_perception_cos,"
        "learner_reasoning_cos,failed,message\n";
  for (const SweepRow& r : rows) {
    ss << kind << ',' << r.cell;
    for (const auto& [name, value] : r.coords) ss << ',' << value;
    ss << ',' << r.run_id << ',';
    if (r.roles) {
      const RoleAssignment& a = *r.roles;
      const MetricsRow& learner = r.final[a.learner];
      ss << (a.learner == 0 ? "model_a" : "model_b") << ','
         << (a.guide == 0 ? "model_a" : "model_b") << ',' << to_string(a.regime) << ','
         << fmt(a.eta_learner) << ',' << fmt(a.eta_guide) << ',' << fmt(a.tau_learner) << ','
         << fmt(a.tau_guide) << ',' << fmt(learner.action_f1) << ','
         << fmt(r.final[a.guide].action_f1) << ',';
      ss << fmt(r.final[0].action_f1) << ',' << fmt(r.final[1].action_f1) << ','
         << fmt(learner.perception_cos) << ',' << fmt(learner.reasoning_cos) << ',';
    } else {
      ss << ",,,,,,,,,,,,,";
    }
    ss << (r.failed ? 1 : 0) << ',' << csv_safe(r.message) << '\n';
  }
  return ss.str();
}

std::vector<std::string> standard_setting_overrides(const RunConfig& base) {
  return {"eta_guide = " + fmt(base.eta_sft), "lr_ratio = 1",
          "tau_learner = " + fmt(base.tau_standard), "tau_guide = " + fmt(base.tau_standard)};
}

SweepResult sweep_lr_ratio(const RunConfig& base, const Dataset& dataset,
                           std::span<const double> ratios) {
  if (ratios.empty()) throw ConfigError("sweep_lr_ratio: no ratios");
  for (double r : ratios) {
    if (!(r > 0.0)) throw ConfigError("sweep_lr_ratio: ratios must be > 0");
  }
  require_scores(base, "sweep_lr_ratio");
  SweepResult out{"lr_ratio", {"ratio"}, {}};
  for (double r : ratios) {
    out.rows.push_back(run_cell(base, dataset, "r=" + fmt(r), {{"ratio", fmt(r)}},
                                {"lr_ratio = " + fmt(r)}));
  }
  return out;
}

SweepResult sweep_temperature(const RunConfig& base, const Dataset& dataset,
                              std::span<const double> tau_learner,
                              std::span<const double> tau_guide) {
  if (tau_learner.empty() || tau_guide.empty()) throw ConfigError("sweep_temperature: empty grid");
  for (double t : tau_learner) {
    if (!(t > 0.0)) throw ConfigError("sweep_temperature: temperatures must be > 0");
  }
  for (double t : tau_guide) {
    if (!(t > 0.0)) throw ConfigError("sweep_temperature: temperatures must be > 0");
  }
  require_scores(base, "sweep_temperature");
  SweepResult out{"temperature", {"tau_learner", "tau_guide"}, {}};
  for (double tl : tau_learner) {
    for (double tg : tau_guide) {
      out.rows.push_back(run_cell(base, dataset, "tau=" + fmt(tl) + "/" + fmt(tg),
                                  {{"tau_learner", fmt(tl)}, {"tau_guide", fmt(tg)}},
                                  {"tau_learner = " + fmt(tl), "tau_guide = " + fmt(tg)}));
    }
  }
  return out;
}

SweepResult ablate_weights(const RunConfig& base, const Dataset& dataset,
                           std::span<const AblationSetting> settings, RunReport* sft) {
  if (settings.empty()) throw ConfigError("ablate_weights: no settings");
  for (const auto& s : settings) s.weights.validate();

  RunConfig scored = base;
  if (!(base.sft_score_a && base.sft_score_b) && base.sft_report.empty()) {
    RunConfig sft_config = with_overrides(base, {"mode = sft"});
    const RunReport report = run_sft(sft_config, dataset);
    if (report.failed) throw NumericalError("ablate_weights: SFT baseline failed: " + report.failure);
    scored = with_overrides(base, {"sft_score_a = " + fmt(report.final_metrics(0).action_f1),
                                   "sft_score_b = " + fmt(report.final_metrics(1).action_f1)});
    if (sft != nullptr) *sft = report;
  }

  SweepResult out{"ablation", {"lambda_sup", "lambda_gsl", "lambda_drl", "ago"}, {}};
  for (const AblationSetting& s : settings) {
    std::vector<std::string> overrides = {"mode = gcl",
                                          "lambda_sup = " + fmt(s.weights.lambda_sup),
                                          "lambda_gsl = " + fmt(s.weights.lambda_gsl),
                                          "lambda_drl = " + fmt(s.weights.lambda_drl)};
    if (!s.ago) {
      const auto standard = standard_setting_overrides(scored);
      overrides.insert(overrides.end(), standard.begin(), standard.end());
    }
    out.rows.push_back(run_cell(scored, dataset, s.label(),
                                {{"lambda_sup", fmt(s.weights.lambda_sup)},
                                 {"lambda_gsl", fmt(s.weights.lambda_gsl)},
                                 {"lambda_drl", fmt(s.weights.lambda_drl)},
                                 {"ago", s.ago ? "1" : "0"}},
                                overrides));
  }
  return out;
}

std::filesystem::path write_sweep(const SweepResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / "sweep.csv";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << result.csv();
  return path;
}

}  // namespace gcl
