#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gcl/model.hpp"

namespace gcl {

enum class Cell : std::uint8_t { free = 0, obstacle, pedestrian, door, goal, robot };
inline constexpr std::size_t kCellKinds = 6;

struct GenKnobs {
  std::size_t rows = 6;
  std::size_t cols = 6;
  std::size_t max_pedestrians = 3;
  std::size_t min_obstacles = 0;
  std::size_t max_obstacles = 4;
  std::size_t max_doors = 1;
  // Image-text pairs emitted per scenario (differing prompts).
  std::size_t multiplicity = 1;
  int max_retries = 64;

  void validate() const;
  bool operator==(const GenKnobs&) const = default;
};

struct Scenario {
  std::string id;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Cell> grid;  // row-major
  std::vector<TokenId> prompt;
  std::vector<TokenId> perception;
  std::vector<TokenId> reasoning;
  std::vector<TokenId> action;
  std::string action_text;

  Cell at(std::size_t r, std::size_t c) const { return grid[r * cols + c]; }
  // [bos] grid prompt -> <perc> perception <reason> reasoning <act> action eos
  Example to_example(const VocabSpec& vocab) const;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::string generator_version;
  GenKnobs knobs;
  std::string checksum;  // hex FNV-1a over train.jsonl then test.jsonl
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Scenario> train;
  std::vector<Scenario> test;
};

inline constexpr std::string_view kGeneratorVersion = "gridnav-1";

// Closed action vocabulary, in a fixed order.
std::span<const std::string_view> action_phrases();

// Text word <-> token id mapping shared by generator, CLI and tests. Word ids
// start after the visual range of the default VocabSpec.
std::vector<TokenId> tokenize(std::string_view text);
std::string detokenize(std::span<const TokenId> tokens, const VocabSpec& vocab = {});

// Ground-truth labelling rule applied to a grid whose bottom-row robot moves
// upward toward a top-row goal. Returns the action phrase.
std::string label_action(const Scenario& scenario);

// Counts are scenario counts; multiplicity multiplies the emitted pairs.
// Throws ConfigError for invalid knobs or zero counts, GenerationError when a
// scenario's layout constraints cannot be met within max_retries.
Dataset generate_dataset(std::uint64_t seed, std::size_t n_train, std::size_t n_test,
                         const GenKnobs& knobs = {});

// Writes train.jsonl, test.jsonl and manifest.json; fills manifest.checksum.
DatasetManifest write_dataset(Dataset& dataset, const std::filesystem::path& dir);
// Reads a dataset directory and verifies counts and checksum.
Dataset load_dataset(const std::filesystem::path& dir);

std::vector<Example> to_examples(std::span<const Scenario> scenarios, const VocabSpec& vocab);

}  // namespace gcl
