#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "gcl/error.hpp"
#include "gcl/harness/dataset.hpp"

namespace {

using gcl::Cell;

// 4x4 grid, robot at the bottom of `robot_col`, goal at the top of `goal_col`.
gcl::Scenario grid(std::size_t robot_col, std::size_t goal_col) {
  gcl::Scenario s;
  s.id = "t";
  s.rows = 4;
  s.cols = 4;
  s.grid.assign(16, Cell::free);
  s.grid[3 * 4 + robot_col] = Cell::robot;
  s.grid[goal_col] = Cell::goal;
  return s;
}

void put(gcl::Scenario& s, std::size_t r, std::size_t c, Cell kind) { s.grid[r * s.cols + c] = kind; }

TEST(LabelRule, PriorityOrder) {
  auto s = grid(1, 1);
  EXPECT_EQ(gcl::label_action(s), "proceed straight");
  put(s, 1, 1, Cell::door);
  EXPECT_EQ(gcl::label_action(s), "slow down");
  put(s, 2, 1, Cell::obstacle);
  EXPECT_EQ(gcl::label_action(s), "veer left");
  put(s, 2, 0, Cell::obstacle);
  EXPECT_EQ(gcl::label_action(s), "veer right");
  put(s, 2, 2, Cell::pedestrian);
  EXPECT_EQ(gcl::label_action(s), "yield left");
  put(s, 2, 0, Cell::pedestrian);
  EXPECT_EQ(gcl::label_action(s), "yield right");
  put(s, 2, 1, Cell::pedestrian);
  EXPECT_EQ(gcl::label_action(s), "stop and wait");
}

TEST(LabelRule, GoalOffsetTurns) {
  EXPECT_EQ(gcl::label_action(grid(3, 0)), "turn left");
  EXPECT_EQ(gcl::label_action(grid(0, 2)), "turn right");
  EXPECT_EQ(gcl::label_action(grid(0, 1)), "proceed straight");
}

TEST(LabelRule, ObstacleAtLeftEdgeVeersRight) {
  auto s = grid(0, 0);
  put(s, 2, 0, Cell::obstacle);
  EXPECT_EQ(gcl::label_action(s), "veer right");
}

TEST(LabelRule, MissingRobotThrows) {
  auto s = grid(0, 0);
  put(s, 3, 0, Cell::free);
  EXPECT_THROW(gcl::label_action(s), gcl::InputError);
}

TEST(Generator, DeterministicPerSeed) {
  const auto a = gcl::generate_dataset(5, 20, 5);
  const auto b = gcl::generate_dataset(5, 20, 5);
  const auto c = gcl::generate_dataset(6, 20, 5);
  EXPECT_EQ(a.manifest.checksum, b.manifest.checksum);
  EXPECT_NE(a.manifest.checksum, c.manifest.checksum);
  EXPECT_EQ(a.manifest.generator_version, "gridnav-1");
}

TEST(Generator, CountsAndMultiplicity) {
  gcl::GenKnobs knobs;
  knobs.multiplicity = 3;
  const auto d = gcl::generate_dataset(1, 7, 2, knobs);
  EXPECT_EQ(d.train.size(), 21u);
  EXPECT_EQ(d.test.size(), 6u);
  EXPECT_EQ(d.manifest.train_ids.size(), 21u);
  EXPECT_EQ(d.train[1].id, "s00000-p1");
  EXPECT_EQ(d.train[0].action, d.train[1].action);
}

TEST(Generator, LabelsFollowTheRule) {
  const auto d = gcl::generate_dataset(2, 200, 10);
  std::map<std::string, int> counts;
  for (const auto& s : d.train) {
    EXPECT_EQ(s.action_text, gcl::label_action(s)) << s.id;
    EXPECT_EQ(s.action, gcl::tokenize(s.action_text));
    ++counts[s.action_text];
  }
  EXPECT_GE(counts.size(), 7u);
}

TEST(Generator, ExamplesFitTheContext) {
  const gcl::VocabSpec vocab;
  const auto d = gcl::generate_dataset(3, 50, 10);
  for (const auto& ex : gcl::to_examples(d.train, vocab)) {
    EXPECT_LE(ex.sequence_length(), 96u);
    EXPECT_EQ(ex.target_tokens.front(), vocab.perc);
    EXPECT_EQ(ex.target_tokens.back(), vocab.eos);
  }
}

TEST(Generator, ImpossibleLayoutRaises) {
  gcl::GenKnobs knobs;
  knobs.rows = 3;
  knobs.cols = 2;
  knobs.min_obstacles = 4;
  knobs.max_obstacles = 4;
  knobs.max_retries = 5;
  try {
    gcl::generate_dataset(1, 1, 1, knobs);
    FAIL() << "expected GenerationError";
  } catch (const gcl::GenerationError& e) {
    EXPECT_EQ(e.retries(), 5);
  }
}

TEST(Generator, InvalidKnobsRejected) {
  gcl::GenKnobs knobs;
  knobs.rows = 2;
  EXPECT_THROW(gcl::generate_dataset(1, 1, 1, knobs), gcl::ConfigError);
  EXPECT_THROW(gcl::generate_dataset(1, 0, 1), gcl::ConfigError);
}

TEST(Tokenizer, RoundTrip) {
  const std::string text = "stop and wait";
  EXPECT_EQ(gcl::detokenize(gcl::tokenize(text)), text);
  EXPECT_THROW(gcl::tokenize("xylophone"), gcl::InputError);
}

TEST(DatasetIo, WriteLoadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "gcl_ds_test";
  std::filesystem::remove_all(dir);
  auto d = gcl::generate_dataset(4, 12, 3);
  const auto m = gcl::write_dataset(d, dir);
  const auto back = gcl::load_dataset(dir);
  EXPECT_EQ(back.manifest.checksum, m.checksum);
  ASSERT_EQ(back.train.size(), 12u);
  EXPECT_EQ(back.train[4].grid, d.train[4].grid);
  EXPECT_EQ(back.test[2].reasoning, d.test[2].reasoning);

  std::filesystem::resize_file(dir / "test.jsonl", std::filesystem::file_size(dir / "test.jsonl") - 2);
  EXPECT_THROW(gcl::load_dataset(dir), gcl::InputError);
  std::filesystem::remove_all(dir);
}

}  // namespace
