#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "gcl/error.hpp"
#include "gcl/harness/config.hpp"
#include "gcl/harness/runner.hpp"
#include "gcl/harness/sweep.hpp"

namespace {

const std::vector<std::string> kTiny{
    "n_train = 8",          "n_test = 2",          "gen.rows = 4",        "gen.cols = 4",
    "model_a.layers = 1",   "model_a.d_model = 16", "model_a.heads = 2",   "model_a.ffn_mult = 2",
    "model_b.layers = 1",   "model_b.d_model = 24", "model_b.heads = 2",   "model_b.ffn_mult = 2",
    "d_proj = 8",           "epochs = 2",           "batch_size = 4",      "embed_dim = 16",
    "save_checkpoints = false"};

gcl::RunConfig tiny(std::vector<std::string> extra = {}) {
  std::vector<std::string> lines = kTiny;
  lines.insert(lines.end(), extra.begin(), extra.end());
  return gcl::with_overrides(gcl::RunConfig{}, lines);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Config, SerializeParseRoundTrip) {
  const auto c = tiny({"lr_scale = 3", "ablations = 1/0.5/0/ago,1/0/0"});
  const auto back = gcl::parse_config(gcl::serialize_config(c));
  EXPECT_EQ(gcl::serialize_config(back), gcl::serialize_config(c));
  EXPECT_EQ(gcl::run_id(back), gcl::run_id(c));
  ASSERT_EQ(back.ablations.size(), 2u);
  EXPECT_TRUE(back.ablations[0].ago);
  EXPECT_EQ(back.ablations[0].weights.lambda_gsl, 0.5);
}

TEST(Config, LaterKeysWinAndIdsChange) {
  const auto a = tiny({"seed = 1"});
  const auto b = tiny({"seed = 1", "seed = 2"});
  EXPECT_EQ(b.seed, 2u);
  EXPECT_NE(gcl::run_id(a), gcl::run_id(b));
  EXPECT_NE(b.source_text.find("seed = 2"), std::string::npos);
}

TEST(Config, RejectsUnknownOrMalformed) {
  EXPECT_THROW(gcl::parse_config("no_such_key = 1"), gcl::ConfigError);
  EXPECT_THROW(gcl::parse_config("epochs = many"), gcl::ConfigError);
  EXPECT_THROW(gcl::parse_config("epochs"), gcl::ConfigError);
  EXPECT_THROW(tiny({"lambda_sup = -1"}).validate(), gcl::ConfigError);
  EXPECT_THROW(tiny({"model_a.heads = 3"}).validate(), gcl::ConfigError);
}

TEST(Config, DefaultAblationRows) {
  const auto rows = gcl::default_ablations();
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows.front().label(), "sup");
  EXPECT_TRUE(rows.back().ago);
}

TEST(Roles, ResolvedFromScoresWithScale) {
  const auto c = tiny({"sft_score_a = 0.3", "sft_score_b = 0.5", "lr_scale = 10"});
  const auto roles = gcl::resolve_roles(c);
  EXPECT_EQ(roles.learner, 0u);
  EXPECT_DOUBLE_EQ(roles.eta_learner, 1e-5 * 10);
  EXPECT_DOUBLE_EQ(roles.eta_guide, 5e-6 * 10);
  EXPECT_EQ(roles.tau_learner, 3.0);
  EXPECT_EQ(roles.regime, gcl::Regime::reshaping);
  EXPECT_THROW(gcl::resolve_roles(tiny()), gcl::ConfigError);
}

TEST(Roles, StandardSettingIsSymmetric) {
  const auto c = tiny();
  const auto roles = gcl::standard_roles(gcl::resolve_roles(c, {0.4, 0.2}), c);
  EXPECT_EQ(roles.learner, 1u);
  EXPECT_EQ(roles.eta_learner, roles.eta_guide);
  EXPECT_EQ(roles.tau_learner, roles.tau_guide);
}

TEST(Runner, RepeatedRunsWriteIdenticalMetrics) {
  const auto root = std::filesystem::temp_directory_path() / "gcl_runner_test";
  std::filesystem::remove_all(root);
  const auto c1 = tiny({"out_dir = " + (root / "a").string(), "mode = sft"});
  const auto c2 = tiny({"out_dir = " + (root / "b").string(), "mode = sft"});
  const auto data = gcl::obtain_dataset(c1);
  const auto r1 = gcl::run(c1, data);
  const auto r2 = gcl::run(c2, data);
  ASSERT_FALSE(r1.failed);
  EXPECT_EQ(r1.epochs_completed, 2u);
  EXPECT_EQ(r1.steps, 4u);
  EXPECT_EQ(r1.metrics[0].size(), 2u);
  EXPECT_EQ(slurp(r1.dir / "metrics.csv"), slurp(r2.dir / "metrics.csv"));
  EXPECT_EQ(slurp(r1.dir / "steps.jsonl"), slurp(r2.dir / "steps.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(r1.dir / "report.json"));
  const auto scores = gcl::read_sft_scores(r1.dir / "report.json");
  EXPECT_EQ(scores[0], r1.final_metrics(0).action_f1);
  std::filesystem::remove_all(root);
}

TEST(Runner, GclRunRecordsRoles) {
  const auto c = tiny({"sft_score_a = 0.1", "sft_score_b = 0.2", "eval_every = 0"});
  const auto r = gcl::run_gcl(c, gcl::obtain_dataset(c));
  ASSERT_TRUE(r.roles);
  EXPECT_EQ(r.roles->learner, 0u);
  EXPECT_EQ(r.metrics[0].size(), 1u);
  EXPECT_GT(r.final_loss.gsl, 0.0);
  EXPECT_TRUE(r.dir.empty());
}

TEST(Sweep, TemperatureGridHasOneRowPerCell) {
  const auto c = tiny({"sft_score_a = 0.1", "sft_score_b = 0.2", "epochs = 1", "eval_every = 0",
                       "n_train = 4"});
  const std::vector<double> tl{1.0, 3.0};
  const std::vector<double> tg{2.0, 2.5, 4.0};
  const auto result = gcl::sweep_temperature(c, gcl::obtain_dataset(c), tl, tg);
  ASSERT_EQ(result.rows.size(), 6u);
  EXPECT_EQ(result.failures(), 0u);
  std::istringstream csv(result.csv());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(csv, line)) ++lines;
  EXPECT_EQ(lines, 7u);
  EXPECT_EQ(result.rows[5].roles->tau_learner, 3.0);
  EXPECT_EQ(result.rows[5].roles->tau_guide, 4.0);
}

TEST(Sweep, LrRatioScalesLearner) {
  const auto c = tiny({"sft_score_a = 0.1", "sft_score_b = 0.2", "epochs = 1", "eval_every = 0",
                       "n_train = 4"});
  const std::vector<double> ratios{1.0, 4.0};
  const auto result = gcl::sweep_lr_ratio(c, gcl::obtain_dataset(c), ratios);
  ASSERT_EQ(result.rows.size(), 2u);
  EXPECT_DOUBLE_EQ(result.rows[1].roles->eta_learner, 4.0 * result.rows[1].roles->eta_guide);
}

}  // namespace
