#include "gcl/harness/runner.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gcl/checkpoint.hpp"
#include "gcl/error.hpp"
#include "gcl/hash.hpp"

namespace gcl {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  const std::uint64_t key[3] = {seed, a, b};
  return fnv1a64(std::as_bytes(std::span(key)));
}

constexpr std::uint64_t kModelStream = 1;
constexpr std::uint64_t kShuffleStream = 2;

json weights_json(const LossWeights& w) {
  return {{"lambda_sup", w.lambda_sup}, {"lambda_gsl", w.lambda_gsl},
          {"lambda_drl", w.lambda_drl}};
}

json loss_json(const LossBreakdown& l) {
  return {{"sup_a", l.sup_a}, {"sup_b", l.sup_b}, {"gsl", l.gsl}, {"drl", l.drl},
          {"drl_unscaled", l.drl_unscaled}, {"total", l.total}};
}

json metrics_json(const MetricsRow& m) {
  return {{"model", m.model_id},         {"epoch", m.epoch},
          {"action_f1", m.action_f1},    {"precision", m.precision},
          {"recall", m.recall},          {"perception_cos", m.perception_cos},
          {"reasoning_cos", m.reasoning_cos}, {"samples", m.samples},
          {"failed", m.failed}};
}

json roles_json(const RoleAssignment& r) {
  return {{"learner", r.learner},         {"guide", r.guide},
          {"eta_learner", r.eta_learner}, {"eta_guide", r.eta_guide},
          {"tau_learner", r.tau_learner}, {"tau_guide", r.tau_guide},
          {"regime", to_string(r.regime)}};
}

std::string format_g(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

// Everything one run needs besides the members themselves.
class RunContext {
 public:
  RunContext(const RunConfig& config, const Dataset& dataset, RunMode mode)
      : cfg_(config),
        vocab_(config.vocab_spec()),
        train_(to_examples(dataset.train, vocab_)),
        test_(to_examples(dataset.test, vocab_)),
        emb_(EmbedderSpec::seeded(config.vocab, config.embed_dim, config.embed_seed)),
        start_(Clock::now()) {
    config.validate();
    for (const Scenario& s : dataset.train) train_ids_.push_back(s.id);
    batches_ = (train_.size() + cfg_.batch_size - 1) / cfg_.batch_size;
    report_.mode = mode;
    report_.run_id = run_id(config);
    report_.config_echo =
        config.source_text.empty() ? serialize_config(config) : config.source_text;
    report_.dataset_checksum = dataset.manifest.checksum;
    for (std::size_t k = 0; k < 2; ++k) report_.capacities[k] = capacity(config.member_config(k));
    if (!cfg_.out_dir.empty()) open_outputs();
  }

  const VocabSpec& vocab() const { return vocab_; }
  std::size_t total_steps() const { return cfg_.epochs * batches_; }
  std::size_t batches() const { return batches_; }
  RunReport& report() { return report_; }

  Competitor make_member(std::size_t k, double eta) const {
    const ScheduleConfig sched{eta, total_steps(), cfg_.warmup_ratio};
    AdamWHyper hyper;
    hyper.weight_decay = cfg_.weight_decay;
    return Competitor::create(cfg_.member_config(k), derive_seed(cfg_.seed, kModelStream, k),
                              cfg_.d_proj, k, sched, hyper);
  }

  // Batches of one epoch in a seeded shuffled order shared by every run mode.
  std::vector<std::vector<std::size_t>> epoch_batches(std::size_t epoch) const {
    std::vector<std::size_t> order(train_.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg_.seed, kShuffleStream, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t b = 0; b < order.size(); b += cfg_.batch_size) {
      out.emplace_back(order.begin() + b,
                       order.begin() + std::min(order.size(), b + cfg_.batch_size));
    }
    return out;
  }

  Batch gather(const std::vector<std::size_t>& idx) const {
    Batch batch;
    batch.reserve(idx.size());
    for (std::size_t i : idx) batch.push_back(train_[i]);
    return batch;
  }

  void log_step(std::size_t epoch, const std::vector<std::size_t>& idx, const StepReport& s,
                std::array<double, 2> taus) {
    if (!steps_.is_open()) return;
    std::vector<std::string> ids;
    for (std::size_t i : idx) ids.push_back(train_ids_[i]);
    json line = loss_json(s.loss);
    line["step"] = s.step;
    line["epoch"] = epoch;
    line["batch_ids"] = ids;
    line["lr_a"] = s.lr[0];
    line["lr_b"] = s.lr[1];
    line["grad_norm_a"] = s.grad_norm[0];
    line["grad_norm_b"] = s.grad_norm[1];
    line["tau_a"] = taus[0];
    line["tau_b"] = taus[1];
    steps_ << line.dump() << '\n';
  }

  bool should_eval(std::size_t epoch) const {
    return epoch == cfg_.epochs || (cfg_.eval_every > 0 && epoch % cfg_.eval_every == 0);
  }

  void evaluate(std::span<Competitor> members, std::size_t epoch) {
    for (std::size_t k = 0; k < members.size(); ++k) {
      MetricsRow row = evaluate_model(members[k].model, test_, vocab_, emb_);
      row.model_id = k == 0 ? "model_a" : "model_b";
      row.epoch = epoch;
      report_.metrics[k].push_back(row);
      if (metrics_.is_open()) metrics_ << metrics_csv_row(report_, k, row) << std::flush;
    }
  }

  void finish(std::span<Competitor> members) {
    report_.wall_clock_s = std::chrono::duration<double>(Clock::now() - start_).count();
    if (report_.dir.empty()) return;
    steps_.close();
    metrics_.close();
    if (cfg_.save_checkpoints && !report_.failed) {
      for (std::size_t k = 0; k < members.size(); ++k) {
        const auto path = report_.dir / (k == 0 ? "model_a.ckpt" : "model_b.ckpt");
        Checkpoint ckpt{members[k].model, report_.steps, members[k].head, members[k].optimizer};
        save_checkpoint(path, ckpt);
        report_.checkpoints[k] = path.string();
      }
    }
    write_report();
  }

 private:
  void open_outputs() {
    report_.dir = std::filesystem::path(cfg_.out_dir) / ("report." + report_.run_id);
    std::filesystem::create_directories(report_.dir);
    std::ofstream(report_.dir / "config.txt", std::ios::binary | std::ios::trunc)
        << report_.config_echo;
    steps_.open(report_.dir / "steps.jsonl", std::ios::binary | std::ios::trunc);
    metrics_.open(report_.dir / "metrics.csv", std::ios::binary | std::ios::trunc);
    if (!steps_ || !metrics_) throw ConfigError("cannot write run outputs under " + cfg_.out_dir);
    metrics_ << metrics_csv_header();
  }

  void write_report() const {
    const RunReport& r = report_;
    json j;
    j["run_id"] = r.run_id;
    j["mode"] = to_string(r.mode);
    j["config_echo"] = r.config_echo;
    j["dataset_checksum"] = r.dataset_checksum;
    j["weights"] = weights_json(r.weights);
    j["roles"] = r.roles ? roles_json(*r.roles) : json(nullptr);
    j["sft_scores"] = r.sft_scores;
    j["capacities"] = r.capacities;
    json metrics = json::array();
    for (const auto& rows : r.metrics) {
      json list = json::array();
      for (const auto& m : rows) list.push_back(metrics_json(m));
      metrics.push_back(list);
    }
    j["metrics"] = metrics;
    json epochs = json::array();
    for (const auto& e : r.epoch_losses) {
      json item = loss_json(e.mean);
      item["epoch"] = e.epoch;
      epochs.push_back(item);
    }
    j["epoch_losses"] = epochs;
    j["final_loss"] = loss_json(r.final_loss);
    j["epochs_completed"] = r.epochs_completed;
    j["steps"] = r.steps;
    j["checkpoints"] = r.checkpoints;
    j["wall_clock_s"] = r.wall_clock_s;
    j["failed"] = r.failed;
    j["failure"] = r.failure;
    std::ofstream(r.dir / "report.json", std::ios::binary | std::ios::trunc) << j.dump(2) << '\n';
  }

  const RunConfig& cfg_;
  VocabSpec vocab_;
  std::vector<Example> train_;
  std::vector<Example> test_;
  std::vector<std::string> train_ids_;
  EmbedderSpec emb_;
  std::size_t batches_ = 0;
  Clock::time_point start_;
  RunReport report_;
  std::ofstream steps_;
  std::ofstream metrics_;
};

void accumulate(LossBreakdown& sum, const LossBreakdown& step) {
  sum.sup_a += step.sup_a;
  sum.sup_b += step.sup_b;
  sum.gsl += step.gsl;
  sum.drl += step.drl;
  sum.drl_unscaled += step.drl_unscaled;
  sum.total += step.total;
}

LossBreakdown divide(LossBreakdown sum, std::size_t n, const LossWeights& w) {
  const double d = static_cast<double>(n);
  sum.sup_a /= d;
  sum.sup_b /= d;
  sum.gsl /= d;
  sum.drl /= d;
  sum.drl_unscaled /= d;
  sum.total /= d;
  sum.weights = w;
  return sum;
}

void hand_back(std::vector<Competitor>& members, RunOutputs* outputs) {
  if (outputs != nullptr) outputs->members = std::move(members);
}

}  // namespace

const MetricsRow& RunReport::final_metrics(std::size_t k) const {
  if (k > 1 || metrics[k].empty()) {
    throw UsageError("run report has no evaluated epoch for member " + std::to_string(k));
  }
  return metrics[k].back();
}

Dataset obtain_dataset(const RunConfig& config) {
  if (!config.data_dir.empty()) return load_dataset(config.data_dir);
  return generate_dataset(config.data_seed, config.n_train, config.n_test, config.knobs);
}

RolePolicy role_policy(const RunConfig& config) {
  RolePolicy p;
  p.eta_low = config.eta_guide * config.lr_scale;
  p.eta_high = config.lr_ratio * config.eta_guide * config.lr_scale;
  p.tau_low = config.tau_large;
  p.tau_high = config.tau_small;
  return p;
}

RoleAssignment resolve_roles(const RunConfig& config, std::array<double, 2> sft_scores) {
  RoleAssignment r =
      assign_roles(sft_scores, {capacity(config.member_config(0)), capacity(config.member_config(1))},
                   role_policy(config));
  if (config.tau_learner > 0.0) r.tau_learner = config.tau_learner;
  if (config.tau_guide > 0.0) r.tau_guide = config.tau_guide;
  return r;
}

RoleAssignment resolve_roles(const RunConfig& config) {
  if (config.sft_score_a && config.sft_score_b) {
    return resolve_roles(config, {*config.sft_score_a, *config.sft_score_b});
  }
  if (!config.sft_report.empty()) return resolve_roles(config, read_sft_scores(config.sft_report));
  throw ConfigError(
      "gcl mode needs SFT scores: set sft_report or both sft_score_a and sft_score_b");
}

RoleAssignment standard_roles(const RoleAssignment& roles, const RunConfig& config) {
  RoleAssignment r = roles;
  r.eta_learner = r.eta_guide = config.eta_sft * config.lr_scale;
  r.tau_learner = r.tau_guide = config.tau_standard;
  return r;
}

std::array<double, 2> read_sft_scores(const std::filesystem::path& report_json) {
  std::ifstream in(report_json, std::ios::binary);
  if (!in) throw ConfigError("cannot open SFT report " + report_json.string());
  try {
    const json j = json::parse(in);
    if (j.at("failed").get<bool>()) {
      throw ConfigError("SFT report " + report_json.string() + " is flagged as failed");
    }
    std::array<double, 2> scores{};
    for (std::size_t k = 0; k < 2; ++k) {
      const json& rows = j.at("metrics").at(k);
      if (rows.empty()) throw ConfigError("SFT report has no metrics for member " + std::to_string(k));
      scores[k] = rows.back().at("action_f1").get<double>();
    }
    return scores;
  } catch (const json::exception& e) {
    throw ConfigError("malformed SFT report " + report_json.string() + ": " + e.what());
  }
}

RunReport run_sft(const RunConfig& config, const Dataset& dataset, RunOutputs* outputs) {
  RunContext ctx(config, dataset, RunMode::sft);
  RunReport& report = ctx.report();
  report.weights = LossWeights{1.0, 0.0, 0.0};
  std::vector<Competitor> members;
  for (std::size_t k = 0; k < 2; ++k) {
    members.push_back(ctx.make_member(k, config.eta_sft * config.lr_scale));
  }

  std::size_t step = 0;
  try {
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
      LossBreakdown sum;
      std::size_t n = 0;
      for (const auto& idx : ctx.epoch_batches(epoch)) {
        const Batch batch = ctx.gather(idx);
        StepReport merged;
        merged.step = step;
        for (std::size_t k = 0; k < 2; ++k) {
          const StepReport s =
              sft_train_step(members[k], step, batch, ctx.vocab(), 1.0, config.grad_clip);
          (k == 0 ? merged.loss.sup_a : merged.loss.sup_b) = k == 0 ? s.loss.sup_a : s.loss.sup_b;
          merged.lr[k] = s.lr[k];
          merged.grad_norm[k] = s.grad_norm[k];
        }
        merged.loss.total = merged.loss.sup_a + merged.loss.sup_b;
        merged.loss.weights = report.weights;
        ctx.log_step(epoch, idx, merged, {1.0, 1.0});
        accumulate(sum, merged.loss);
        report.final_loss = merged.loss;
        ++n;
        ++step;
        report.steps = step;
      }
      report.epoch_losses.push_back({epoch, divide(sum, n, report.weights)});
      if (ctx.should_eval(epoch)) ctx.evaluate(members, epoch);
      report.epochs_completed = epoch;
    }
  } catch (const NumericalError& e) {
    report.failed = true;
    report.failure = e.what();
  } catch (const DegenerateInputError& e) {
    report.failed = true;
    report.failure = e.what();
  }
  ctx.finish(members);
  RunReport out = report;
  hand_back(members, outputs);
  return out;
}

RunReport run_gcl(const RunConfig& config, const Dataset& dataset,
                  std::optional<RoleAssignment> roles, RunOutputs* outputs) {
  RunContext ctx(config, dataset, RunMode::gcl);
  RunReport& report = ctx.report();
  report.weights = config.weights;
  if (!roles) {
    roles = resolve_roles(config);
    if (config.sft_score_a && config.sft_score_b) {
      report.sft_scores = {*config.sft_score_a, *config.sft_score_b};
    } else {
      report.sft_scores = read_sft_scores(config.sft_report);
    }
  }
  report.roles = roles;

  CompetitiveGroup group{{ctx.make_member(0, roles->eta_for(0)), ctx.make_member(1, roles->eta_for(1))},
                         *roles,
                         ctx.vocab(),
                         0};
  const StepOptions options = config.step_options();
  const std::array<double, 2> taus{roles->tau_for(0), roles->tau_for(1)};

  try {
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
      LossBreakdown sum;
      std::size_t n = 0;
      for (const auto& idx : ctx.epoch_batches(epoch)) {
        const StepReport s = gcl_train_step(group, ctx.gather(idx), options);
        ctx.log_step(epoch, idx, s, taus);
        accumulate(sum, s.loss);
        report.final_loss = s.loss;
        ++n;
        report.steps = group.step;
      }
      report.epoch_losses.push_back({epoch, divide(sum, n, config.weights)});
      if (ctx.should_eval(epoch)) ctx.evaluate(group.members, epoch);
      report.epochs_completed = epoch;
    }
  } catch (const NumericalError& e) {
    report.failed = true;
    report.failure = e.what();
  } catch (const DegenerateInputError& e) {
    report.failed = true;
    report.failure = e.what();
  }
  ctx.finish(group.members);
  std::vector<Competitor> members(std::make_move_iterator(group.members.begin()),
                                  std::make_move_iterator(group.members.end()));
  RunReport out = report;
  hand_back(members, outputs);
  return out;
}

RunReport run(const RunConfig& config, const Dataset& dataset) {
  return config.mode == RunMode::sft ? run_sft(config, dataset) : run_gcl(config, dataset);
}

double mean_supervised_loss(const ModelParams& params, std::span<const Example> examples,
                            const VocabSpec& vocab) {
  if (examples.empty()) throw InputError("mean_supervised_loss: no examples");
  constexpr std::size_t kChunk = 16;
  double weighted = 0.0;
  std::size_t rows = 0;
  for (std::size_t b = 0; b < examples.size(); b += kChunk) {
    const Batch batch(examples.begin() + b,
                      examples.begin() + std::min(examples.size(), b + kChunk));
    std::vector<std::vector<TokenId>> seqs;
    for (const Example& ex : batch) seqs.push_back(ex.inputs(vocab));
    Graph graph(false);
    const GraphForward fwd = forward(graph, const_cast<ModelParams&>(params), seqs);
    const TargetRows targets = target_rows(batch, vocab);
    const double loss = supervised_loss(fwd.logits, targets.rows, targets.labels).value().item();
    weighted += loss * static_cast<double>(targets.rows.size());
    rows += targets.rows.size();
  }
  return weighted / static_cast<double>(rows);
}

std::string metrics_csv_header() {
  return "run_id,mode,model,role,epoch,action_f1,precision,recall,perception_cos,"
         "reasoning_cos,samples,failed_samples\n";
}

std::string metrics_csv_row(const RunReport& report, std::size_t member, const MetricsRow& row) {
  std::string role;
  if (report.roles) role = report.roles->learner == member ? "learner" : "guide";
  std::ostringstream ss;
  ss << report.run_id << ',' << to_string(report.mode) << ',' << row.model_id << ',' << role
     << ',' << row.epoch << ',' << format_g(row.action_f1) << ',' << format_g(row.precision)
     << ',' << format_g(row.recall) << ',' << format_g(row.perception_cos) << ','
     << format_g(row.reasoning_cos) << ',' << row.samples << ',' << row.failed << '\n';
  return ss.str();
}

}  // namespace gcl
