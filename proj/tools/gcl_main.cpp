#include <array>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gcl/checkpoint.hpp"
#include "gcl/error.hpp"
#include "gcl/harness/config.hpp"
#include "gcl/harness/dataset.hpp"
#include "gcl/harness/runner.hpp"
#include "gcl/harness/sweep.hpp"
#include "gcl/metrics.hpp"
#include "gcl/selfcheck.hpp"

namespace {

enum Exit : int { kOk = 0, kConfig = 1, kNumerical = 2, kPartialSweep = 3 };

std::string flag_name(const std::string& key) {
  std::string out = key;
  for (char& c : out) {
    if (c == '_') c = '-';
  }
  return "--" + out;
}

// Options shared by every command that builds a RunConfig.
struct RunOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::map<std::string, std::string> fields;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", sets, "extra 'key = value' line (repeatable)");
    for (const std::string& key : gcl::config_keys()) {
      if (key == "mode") continue;
      cmd->add_option(flag_name(key), fields[key], "config key " + key);
    }
  }

  gcl::RunConfig build(const std::string& mode) const {
    std::vector<std::string> lines;
    for (const auto& [key, value] : fields) {
      if (!value.empty()) lines.push_back(key + " = " + value);
    }
    lines.insert(lines.end(), sets.begin(), sets.end());
    lines.push_back("mode = " + mode);
    gcl::RunConfig config;
    if (!config_path.empty()) {
      config = gcl::load_config(config_path, lines);
    } else {
      config.source_text = "";
      std::string text;
      for (const auto& l : lines) text += l + "\n";
      config = gcl::parse_config(text);
    }
    config.validate();
    return config;
  }
};

void print_metrics(const gcl::RunReport& report) {
  for (std::size_t k = 0; k < 2; ++k) {
    if (report.metrics[k].empty()) continue;
    const gcl::MetricsRow& m = report.final_metrics(k);
    std::string role;
    if (report.roles) role = report.roles->learner == k ? " (learner)" : " (guide)";
    std::printf("%s%s  epoch %zu  action_f1 %.4f  P %.4f  R %.4f  perception_cos %.4f  "
                "reasoning_cos %.4f  failed %zu/%zu\n",
                m.model_id.c_str(), role.c_str(), m.epoch, m.action_f1, m.precision, m.recall,
                m.perception_cos, m.reasoning_cos, m.failed, m.samples);
  }
}

int finish_run(const gcl::RunReport& report) {
  if (report.roles) {
    const auto& r = *report.roles;
    std::printf("roles: learner model_%c  guide model_%c  eta %.3g/%.3g  tau %.3g/%.3g  regime %s\n",
                r.learner == 0 ? 'a' : 'b', r.guide == 0 ? 'a' : 'b', r.eta_learner, r.eta_guide,
                r.tau_learner, r.tau_guide, gcl::to_string(r.regime).c_str());
  }
  print_metrics(report);
  std::printf("run %s: %zu epochs, %zu steps, %.1fs%s%s\n", report.run_id.c_str(),
              report.epochs_completed, report.steps, report.wall_clock_s,
              report.dir.empty() ? "" : ", outputs in ",
              report.dir.empty() ? "" : report.dir.string().c_str());
  if (report.failed) {
    std::fprintf(stderr, "numerical abort: %s\n", report.failure.c_str());
    return kNumerical;
  }
  return kOk;
}

int finish_sweep(const gcl::SweepResult& result, const gcl::RunConfig& config) {
  std::cout << result.csv();
  if (!config.out_dir.empty()) {
    const auto path = gcl::write_sweep(result, config.out_dir);
    std::fprintf(stderr, "wrote %s\n", path.string().c_str());
  }
  if (result.failures() > 0) {
    std::fprintf(stderr, "%zu of %zu cells failed\n", result.failures(), result.rows.size());
    return kPartialSweep;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group competitive learning desk toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic navigation dataset");
  std::uint64_t gen_seed = 0;
  std::size_t n_train = 256, n_test = 64;
  std::string gen_out;
  gcl::GenKnobs knobs;
  gen->add_option("--seed", gen_seed);
  gen->add_option("--n-train", n_train);
  gen->add_option("--n-test", n_test);
  gen->add_option("--out", gen_out)->required();
  gen->add_option("--rows", knobs.rows);
  gen->add_option("--cols", knobs.cols);
  gen->add_option("--max-pedestrians", knobs.max_pedestrians);
  gen->add_option("--min-obstacles", knobs.min_obstacles);
  gen->add_option("--max-obstacles", knobs.max_obstacles);
  gen->add_option("--max-doors", knobs.max_doors);
  gen->add_option("--multiplicity", knobs.multiplicity);
  gen->add_option("--max-retries", knobs.max_retries);

  // run commands
  std::array<RunOptions, 5> run_opts;
  auto* sft = app.add_subcommand("train-sft", "independent supervised baselines for both models");
  auto* gcl_cmd = app.add_subcommand("train-gcl", "joint training with the group objective");
  auto* sweep_lr = app.add_subcommand("sweep-lr", "learning-rate ratio sweep");
  auto* sweep_temp = app.add_subcommand("sweep-temp", "temperature grid sweep");
  auto* ablate = app.add_subcommand("ablate", "loss-component ablation grid");
  run_opts[0].attach(sft);
  run_opts[1].attach(gcl_cmd);
  run_opts[2].attach(sweep_lr);
  run_opts[3].attach(sweep_temp);
  run_opts[4].attach(ablate);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  std::string ckpt_path, eval_data, split = "test";
  std::size_t embed_dim = 64;
  std::uint64_t embed_seed = 7;
  eval->add_option("--checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_data)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--split", split)->check(CLI::IsMember({"train", "test"}));
  eval->add_option("--embed-dim", embed_dim);
  eval->add_option("--embed-seed", embed_seed);

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "closed-form and autodiff gradient checks");
  std::size_t gc_pairs = 100, gc_vocab = 32, gc_instances = 10;
  std::uint64_t gc_seed = 1;
  double gc_h = 1e-5, gc_tol = 1e-6;
  gradcheck->add_option("--pairs", gc_pairs);
  gradcheck->add_option("--vocab", gc_vocab);
  gradcheck->add_option("--instances", gc_instances);
  gradcheck->add_option("--seed", gc_seed);
  gradcheck->add_option("--step", gc_h, "finite-difference step");
  gradcheck->add_option("--tol", gc_tol);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (gen->parsed()) {
      gcl::Dataset d = gcl::generate_dataset(gen_seed, n_train, n_test, knobs);
      const auto m = gcl::write_dataset(d, gen_out);
      std::printf("wrote %zu train / %zu test to %s (checksum %s)\n", m.n_train, m.n_test,
                  gen_out.c_str(), m.checksum.c_str());
      return kOk;
    }
    if (sft->parsed() || gcl_cmd->parsed()) {
      const bool is_sft = sft->parsed();
      const auto config = run_opts[is_sft ? 0 : 1].build(is_sft ? "sft" : "gcl");
      const auto dataset = gcl::obtain_dataset(config);
      return finish_run(is_sft ? gcl::run_sft(config, dataset) : gcl::run_gcl(config, dataset));
    }
    if (sweep_lr->parsed()) {
      const auto config = run_opts[2].build("gcl");
      const auto dataset = gcl::obtain_dataset(config);
      return finish_sweep(gcl::sweep_lr_ratio(config, dataset, config.lr_ratios), config);
    }
    if (sweep_temp->parsed()) {
      const auto config = run_opts[3].build("gcl");
      const auto dataset = gcl::obtain_dataset(config);
      return finish_sweep(gcl::sweep_temperature(config, dataset, config.tau_learner_grid,
                                                 config.tau_guide_grid),
                          config);
    }
    if (ablate->parsed()) {
      const auto config = run_opts[4].build("gcl");
      const auto dataset = gcl::obtain_dataset(config);
      return finish_sweep(gcl::ablate_weights(config, dataset, config.ablations), config);
    }
    if (eval->parsed()) {
      const gcl::Checkpoint ckpt = gcl::load_checkpoint(ckpt_path);
      const gcl::Dataset d = gcl::load_dataset(eval_data);
      gcl::VocabSpec vocab;
      vocab.size = ckpt.params.config.vocab;
      vocab.visual_count = gcl::kCellKinds;
      const auto examples = gcl::to_examples(split == "test" ? d.test : d.train, vocab);
      const auto emb = gcl::EmbedderSpec::seeded(vocab.size, embed_dim, embed_seed);
      const gcl::MetricsRow m = gcl::evaluate_model(ckpt.params, examples, vocab, emb);
      const nlohmann::json j = {{"checkpoint", ckpt_path},     {"split", split},
                                {"step", ckpt.step},           {"action_f1", m.action_f1},
                                {"precision", m.precision},    {"recall", m.recall},
                                {"perception_cos", m.perception_cos},
                                {"reasoning_cos", m.reasoning_cos},
                                {"samples", m.samples},        {"failed", m.failed}};
      std::cout << j.dump(2) << '\n';
      return kOk;
    }
    if (gradcheck->parsed()) {
      const double taus[] = {2.0, 3.0};
      const auto drl = gcl::check_drl_closed_form(gc_pairs, gc_vocab, taus, gc_seed, gc_h);
      const auto comp = gcl::check_gco_components(gc_instances, gc_seed, gc_h);
      std::printf("drl closed form: %zu pairs, vocab %zu, max rel err %.3e "
                  "(worst coordinate %.3e, max abs err %.3e)\n",
                  drl.pairs, gc_vocab, drl.max_rel_err, drl.max_coord_rel_err, drl.max_abs_err);
      std::printf("autodiff: sup %.3e  gsl %.3e  drl %.3e over %zu instances\n",
                  comp.sup_rel_err, comp.gsl_rel_err, comp.drl_rel_err, comp.instances);
      const bool ok = drl.max_rel_err <= gc_tol && comp.sup_rel_err <= gc_tol &&
                      comp.gsl_rel_err <= gc_tol && comp.drl_rel_err <= gc_tol;
      std::printf("%s (tolerance %.1e)\n", ok ? "ok" : "FAILED", gc_tol);
      return ok ? kOk : kNumerical;
    }
  } catch (const gcl::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kNumerical;
  } catch (const gcl::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfig;
  }
  return kOk;
}
