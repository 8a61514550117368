#include "gcl/harness/dataset.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <deque>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gcl/error.hpp"
#include "gcl/hash.hpp"

namespace gcl {
namespace {

using json = nlohmann::json;

constexpr TokenId kFirstWordId = 16;

// Every text word the generator can emit, in id order.
constexpr std::string_view kWords[] = {
    // prompts
    "robot", "navigate", "to", "the", "goal", "safely", "what", "should", "do",
    "next", "reach", "politely", "move", "toward", "now",
    // perception
    "no", "one", "two", "three", "many", "pedestrians", "ahead", "left", "right",
    "far", "door", "near", "obstacle",
    // reasoning
    "pedestrian", "is", "on", "path", "so", "keep", "personal", "space", "give",
    "way", "avoid", "collision", "be", "careful", "at", "passage", "lies",
    "change", "direction", "clear", "stay", "course",
    // actions
    "stop", "and", "wait", "yield", "veer", "turn", "proceed", "straight", "slow",
    "down",
    // spare
    "forward", "back", "here", "there"};

constexpr std::string_view kActions[] = {
    "stop and wait", "yield right", "yield left",  "veer left",       "veer right",
    "slow down",     "turn left",   "turn right",  "proceed straight"};

constexpr std::string_view kPrompts[] = {
    "robot navigate to the goal safely", "what should the robot do next",
    "reach the goal politely", "move toward the goal now"};

std::string_view reasoning_for(std::string_view action) {
  static const std::map<std::string_view, std::string_view> table = {
      {"stop and wait", "pedestrian is on the path so stop to keep personal space"},
      {"yield right", "pedestrian on the left so give way to the right"},
      {"yield left", "pedestrian on the right so give way to the left"},
      {"veer left", "obstacle on the path so avoid collision on the left"},
      {"veer right", "obstacle on the path so avoid collision on the right"},
      {"slow down", "door near so be careful at the passage"},
      {"turn left", "goal lies to the left so change direction"},
      {"turn right", "goal lies to the right so change direction"},
      {"proceed straight", "path is clear so stay on course"},
  };
  return table.at(action);
}

const std::map<std::string_view, TokenId>& word_ids() {
  static const std::map<std::string_view, TokenId> ids = [] {
    std::map<std::string_view, TokenId> m;
    for (std::size_t i = 0; i < std::size(kWords); ++i) m.emplace(kWords[i], kFirstWordId + i);
    return m;
  }();
  return ids;
}

struct Layout {
  std::size_t robot_col = 0;
  std::size_t goal_col = 0;
};

Layout find_layout(const Scenario& s) {
  Layout l;
  bool robot = false, goal = false;
  for (std::size_t c = 0; c < s.cols; ++c) {
    if (s.at(s.rows - 1, c) == Cell::robot) { l.robot_col = c; robot = true; }
    if (s.at(0, c) == Cell::goal) { l.goal_col = c; goal = true; }
  }
  if (!robot || !goal) throw InputError("scenario " + s.id + ": robot or goal missing");
  return l;
}

bool cell_is(const Scenario& s, std::ptrdiff_t r, std::ptrdiff_t c, Cell kind) {
  if (r < 0 || c < 0 || r >= static_cast<std::ptrdiff_t>(s.rows) ||
      c >= static_cast<std::ptrdiff_t>(s.cols)) {
    return false;
  }
  return s.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) == kind;
}

bool reachable(const Scenario& s) {
  const Layout l = find_layout(s);
  std::vector<bool> seen(s.grid.size(), false);
  std::deque<std::size_t> queue{(s.rows - 1) * s.cols + l.robot_col};
  seen[queue.front()] = true;
  const std::size_t target = l.goal_col;
  while (!queue.empty()) {
    const std::size_t cur = queue.front();
    queue.pop_front();
    if (cur == target) return true;
    const std::size_t r = cur / s.cols, c = cur % s.cols;
    const std::array<std::pair<std::ptrdiff_t, std::ptrdiff_t>, 4> steps = {
        {{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
    for (auto [dr, dc] : steps) {
      const std::ptrdiff_t nr = static_cast<std::ptrdiff_t>(r) + dr;
      const std::ptrdiff_t nc = static_cast<std::ptrdiff_t>(c) + dc;
      if (nr < 0 || nc < 0 || nr >= static_cast<std::ptrdiff_t>(s.rows) ||
          nc >= static_cast<std::ptrdiff_t>(s.cols)) {
        continue;
      }
      const std::size_t next = static_cast<std::size_t>(nr) * s.cols + static_cast<std::size_t>(nc);
      if (seen[next] || s.grid[next] == Cell::obstacle) continue;
      seen[next] = true;
      queue.push_back(next);
    }
  }
  return false;
}

std::vector<TokenId> words(std::string_view text) { return tokenize(text); }

std::string perception_text(const Scenario& s) {
  const Layout l = find_layout(s);
  const auto r = static_cast<std::ptrdiff_t>(s.rows) - 2;
  const auto c = static_cast<std::ptrdiff_t>(l.robot_col);
  const auto peds = static_cast<std::size_t>(
      std::count(s.grid.begin(), s.grid.end(), Cell::pedestrian));
  static constexpr std::array<std::string_view, 4> counts = {"no", "one", "two", "three"};
  std::string out(peds < counts.size() ? counts[peds] : "many");
  out += " pedestrians";
  if (peds > 0) {
    if (cell_is(s, r, c, Cell::pedestrian)) out += " ahead";
    else if (cell_is(s, r, c - 1, Cell::pedestrian)) out += " left";
    else if (cell_is(s, r, c + 1, Cell::pedestrian)) out += " right";
    else out += " far";
  }
  if (cell_is(s, r, c, Cell::obstacle)) out += " obstacle ahead";
  if (cell_is(s, r, c, Cell::door) || cell_is(s, r - 1, c, Cell::door)) out += " door near";
  out += " goal";
  if (l.goal_col + 2 <= l.robot_col) out += " left";
  else if (l.goal_col >= l.robot_col + 2) out += " right";
  else out += " ahead";
  return out;
}

void fill_texts(Scenario& s, std::size_t prompt_index) {
  s.action_text = label_action(s);
  s.prompt = words(kPrompts[prompt_index % std::size(kPrompts)]);
  s.perception = words(perception_text(s));
  s.reasoning = words(reasoning_for(s.action_text));
  s.action = words(s.action_text);
}

enum class Event { none, ped_ahead, ped_left, ped_right, obstacle_ahead, door_near, kCount };

// One attempt at a layout; false when the constraints are not met.
bool try_layout(Scenario& s, std::mt19937_64& rng, const GenKnobs& k) {
  const std::size_t R = k.rows, C = k.cols;
  s.rows = R;
  s.cols = C;
  s.grid.assign(R * C, Cell::free);
  auto pick = [&](std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };
  const std::size_t rc = pick(C);
  const std::size_t gc = pick(C);
  s.grid[(R - 1) * C + rc] = Cell::robot;
  s.grid[gc] = Cell::goal;

  // Cells whose content drives the label; filled only by the chosen event.
  std::vector<std::size_t> reserved = {(R - 2) * C + rc, (R - 3) * C + rc};
  if (rc > 0) reserved.push_back((R - 2) * C + rc - 1);
  if (rc + 1 < C) reserved.push_back((R - 2) * C + rc + 1);

  std::size_t peds = pick(k.max_pedestrians + 1);
  std::size_t obstacles = k.min_obstacles + pick(k.max_obstacles - k.min_obstacles + 1);
  std::size_t doors = pick(k.max_doors + 1);

  const auto event = static_cast<Event>(pick(static_cast<std::size_t>(Event::kCount)));
  auto place_event = [&](std::size_t cell, Cell kind, std::size_t& budget) {
    if (s.grid[cell] != Cell::free) return;
    s.grid[cell] = kind;
    budget = budget > 0 ? budget - 1 : 0;
  };
  switch (event) {
    case Event::ped_ahead: place_event((R - 2) * C + rc, Cell::pedestrian, peds); break;
    case Event::ped_left:
      if (rc > 0) place_event((R - 2) * C + rc - 1, Cell::pedestrian, peds);
      break;
    case Event::ped_right:
      if (rc + 1 < C) place_event((R - 2) * C + rc + 1, Cell::pedestrian, peds);
      break;
    case Event::obstacle_ahead:
      place_event((R - 2) * C + rc, Cell::obstacle, obstacles);
      break;
    case Event::door_near:
      place_event((R - 2 - pick(2)) * C + rc, Cell::door, doors);
      break;
    default: break;
  }

  std::vector<std::size_t> open;
  for (std::size_t i = 0; i < s.grid.size(); ++i) {
    if (s.grid[i] == Cell::free &&
        std::find(reserved.begin(), reserved.end(), i) == reserved.end()) {
      open.push_back(i);
    }
  }
  if (peds + obstacles + doors > open.size()) return false;
  std::shuffle(open.begin(), open.end(), rng);
  std::size_t next = 0;
  for (std::size_t i = 0; i < peds; ++i) s.grid[open[next++]] = Cell::pedestrian;
  for (std::size_t i = 0; i < obstacles; ++i) s.grid[open[next++]] = Cell::obstacle;
  for (std::size_t i = 0; i < doors; ++i) s.grid[open[next++]] = Cell::door;
  return reachable(s);
}

Scenario make_scenario(std::uint64_t seed, std::size_t index, const GenKnobs& k) {
  const std::uint64_t key[2] = {seed, index};
  std::mt19937_64 rng(fnv1a64(std::as_bytes(std::span(key))));
  Scenario s;
  for (int attempt = 0; attempt <= k.max_retries; ++attempt) {
    if (try_layout(s, rng, k)) return s;
  }
  throw GenerationError("scenario " + std::to_string(index) +
                            ": layout constraints unsatisfiable",
                        k.max_retries);
}

std::string pair_id(std::size_t index, std::size_t pair, std::size_t multiplicity) {
  char buf[32];
  if (multiplicity == 1) {
    std::snprintf(buf, sizeof buf, "s%05zu", index);
  } else {
    std::snprintf(buf, sizeof buf, "s%05zu-p%zu", index, pair);
  }
  return buf;
}

json scenario_json(const Scenario& s) {
  std::vector<int> grid(s.grid.size());
  std::transform(s.grid.begin(), s.grid.end(), grid.begin(),
                 [](Cell c) { return static_cast<int>(c); });
  return json{{"id", s.id},         {"rows", s.rows},
              {"cols", s.cols},     {"grid", grid},
              {"prompt", s.prompt}, {"perception", s.perception},
              {"reasoning", s.reasoning}, {"action", s.action},
              {"action_text", s.action_text}};
}

Scenario scenario_from_json(const json& j) {
  Scenario s;
  s.id = j.at("id").get<std::string>();
  s.rows = j.at("rows").get<std::size_t>();
  s.cols = j.at("cols").get<std::size_t>();
  for (int code : j.at("grid").get<std::vector<int>>()) {
    if (code < 0 || code >= static_cast<int>(kCellKinds)) {
      throw InputError("scenario " + s.id + ": invalid cell code");
    }
    s.grid.push_back(static_cast<Cell>(code));
  }
  if (s.grid.size() != s.rows * s.cols) throw InputError("scenario " + s.id + ": grid size");
  s.prompt = j.at("prompt").get<std::vector<TokenId>>();
  s.perception = j.at("perception").get<std::vector<TokenId>>();
  s.reasoning = j.at("reasoning").get<std::vector<TokenId>>();
  s.action = j.at("action").get<std::vector<TokenId>>();
  s.action_text = j.at("action_text").get<std::string>();
  return s;
}

std::string jsonl(const std::vector<Scenario>& scenarios) {
  std::string out;
  for (const Scenario& s : scenarios) {
    out += scenario_json(s).dump();
    out += '\n';
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("write failed for " + path.string());
}

std::string content_checksum(const std::string& train, const std::string& test) {
  return hex64(fnv1a64(test, fnv1a64(train)));
}

json knobs_json(const GenKnobs& k) {
  return json{{"rows", k.rows},
              {"cols", k.cols},
              {"max_pedestrians", k.max_pedestrians},
              {"min_obstacles", k.min_obstacles},
              {"max_obstacles", k.max_obstacles},
              {"max_doors", k.max_doors},
              {"multiplicity", k.multiplicity},
              {"max_retries", k.max_retries}};
}

GenKnobs knobs_from_json(const json& j) {
  GenKnobs k;
  k.rows = j.at("rows").get<std::size_t>();
  k.cols = j.at("cols").get<std::size_t>();
  k.max_pedestrians = j.at("max_pedestrians").get<std::size_t>();
  k.min_obstacles = j.at("min_obstacles").get<std::size_t>();
  k.max_obstacles = j.at("max_obstacles").get<std::size_t>();
  k.max_doors = j.at("max_doors").get<std::size_t>();
  k.multiplicity = j.at("multiplicity").get<std::size_t>();
  k.max_retries = j.at("max_retries").get<int>();
  return k;
}

}  // namespace

void GenKnobs::validate() const {
  if (rows < 3 || cols < 1) throw ConfigError("gen: grid must have >= 3 rows and >= 1 column");
  if (rows > 16 || cols > 16) throw ConfigError("gen: grid larger than 16x16");
  if (min_obstacles > max_obstacles) throw ConfigError("gen: min_obstacles > max_obstacles");
  if (multiplicity < 1) throw ConfigError("gen: multiplicity must be >= 1");
  if (max_retries < 0) throw ConfigError("gen: max_retries must be >= 0");
}

Example Scenario::to_example(const VocabSpec& vocab) const {
  Example ex;
  ex.visual_tokens.reserve(grid.size());
  for (Cell c : grid) ex.visual_tokens.push_back(vocab.visual_offset + static_cast<TokenId>(c));
  ex.text_tokens = prompt;
  ex.target_tokens.push_back(vocab.perc);
  ex.target_tokens.insert(ex.target_tokens.end(), perception.begin(), perception.end());
  ex.target_tokens.push_back(vocab.reason);
  ex.target_tokens.insert(ex.target_tokens.end(), reasoning.begin(), reasoning.end());
  ex.target_tokens.push_back(vocab.act);
  ex.target_tokens.insert(ex.target_tokens.end(), action.begin(), action.end());
  ex.target_tokens.push_back(vocab.eos);
  return ex;
}

std::span<const std::string_view> action_phrases() { return kActions; }

std::vector<TokenId> tokenize(std::string_view text) {
  std::vector<TokenId> out;
  std::istringstream in{std::string(text)};
  std::string word;
  const auto& ids = word_ids();
  while (in >> word) {
    const auto it = ids.find(word);
    if (it == ids.end()) throw InputError("tokenize: unknown word '" + word + "'");
    out.push_back(it->second);
  }
  return out;
}

std::string detokenize(std::span<const TokenId> tokens, const VocabSpec& vocab) {
  std::string out;
  for (TokenId t : tokens) {
    if (!out.empty()) out += ' ';
    if (t == vocab.pad) out += "<pad>";
    else if (t == vocab.bos) out += "<bos>";
    else if (t == vocab.eos) out += "<eos>";
    else if (t == vocab.perc) out += "<perc>";
    else if (t == vocab.reason) out += "<reason>";
    else if (t == vocab.act) out += "<act>";
    else if (vocab.is_visual(t)) out += "<v" + std::to_string(t - vocab.visual_offset) + ">";
    else if (t >= kFirstWordId && t < kFirstWordId + std::size(kWords)) out += kWords[t - kFirstWordId];
    else out += "<" + std::to_string(t) + ">";
  }
  return out;
}

std::string label_action(const Scenario& s) {
  const Layout l = find_layout(s);
  const auto r = static_cast<std::ptrdiff_t>(s.rows) - 2;
  const auto c = static_cast<std::ptrdiff_t>(l.robot_col);
  if (cell_is(s, r, c, Cell::pedestrian)) return "stop and wait";
  if (cell_is(s, r, c - 1, Cell::pedestrian)) return "yield right";
  if (cell_is(s, r, c + 1, Cell::pedestrian)) return "yield left";
  if (cell_is(s, r, c, Cell::obstacle)) {
    const bool left_open = c > 0 && !cell_is(s, r, c - 1, Cell::obstacle);
    return left_open ? "veer left" : "veer right";
  }
  if (cell_is(s, r, c, Cell::door) || cell_is(s, r - 1, c, Cell::door)) return "slow down";
  if (l.goal_col + 2 <= l.robot_col) return "turn left";
  if (l.goal_col >= l.robot_col + 2) return "turn right";
  return "proceed straight";
}

Dataset generate_dataset(std::uint64_t seed, std::size_t n_train, std::size_t n_test,
                         const GenKnobs& knobs) {
  knobs.validate();
  if (n_train < 1 || n_test < 1) throw ConfigError("gen: counts must be >= 1");
  Dataset d;
  d.manifest.seed = seed;
  d.manifest.generator_version = std::string(kGeneratorVersion);
  d.manifest.knobs = knobs;
  for (std::size_t index = 0; index < n_train + n_test; ++index) {
    const Scenario base = make_scenario(seed, index, knobs);
    const bool train = index < n_train;
    for (std::size_t pair = 0; pair < knobs.multiplicity; ++pair) {
      Scenario s = base;
      s.id = pair_id(index, pair, knobs.multiplicity);
      fill_texts(s, index + pair);
      (train ? d.manifest.train_ids : d.manifest.test_ids).push_back(s.id);
      (train ? d.train : d.test).push_back(std::move(s));
    }
  }
  d.manifest.n_train = d.train.size();
  d.manifest.n_test = d.test.size();
  d.manifest.checksum = content_checksum(jsonl(d.train), jsonl(d.test));
  return d;
}

DatasetManifest write_dataset(Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string train = jsonl(dataset.train);
  const std::string test = jsonl(dataset.test);
  dataset.manifest.checksum = content_checksum(train, test);
  write_file(dir / "train.jsonl", train);
  write_file(dir / "test.jsonl", test);
  const DatasetManifest& m = dataset.manifest;
  const json manifest = {{"seed", m.seed},
                         {"n_train", m.n_train},
                         {"n_test", m.n_test},
                         {"train_ids", m.train_ids},
                         {"test_ids", m.test_ids},
                         {"generator_version", m.generator_version},
                         {"knobs", knobs_json(m.knobs)},
                         {"checksum", m.checksum}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return m;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset d;
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
    DatasetManifest& m = d.manifest;
    m.seed = manifest.at("seed").get<std::uint64_t>();
    m.n_train = manifest.at("n_train").get<std::size_t>();
    m.n_test = manifest.at("n_test").get<std::size_t>();
    m.train_ids = manifest.at("train_ids").get<std::vector<std::string>>();
    m.test_ids = manifest.at("test_ids").get<std::vector<std::string>>();
    m.generator_version = manifest.at("generator_version").get<std::string>();
    m.knobs = knobs_from_json(manifest.at("knobs"));
    m.checksum = manifest.at("checksum").get<std::string>();
  } catch (const json::exception& e) {
    throw InputError("dataset manifest: " + std::string(e.what()));
  }

  const std::string train = read_file(dir / "train.jsonl");
  const std::string test = read_file(dir / "test.jsonl");
  if (content_checksum(train, test) != d.manifest.checksum) {
    throw InputError("dataset " + dir.string() + ": checksum mismatch");
  }
  auto parse = [](const std::string& text, std::vector<Scenario>& out) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        out.push_back(scenario_from_json(json::parse(line)));
      } catch (const json::exception& e) {
        throw InputError("dataset record: " + std::string(e.what()));
      }
    }
  };
  parse(train, d.train);
  parse(test, d.test);
  if (d.train.size() != d.manifest.n_train || d.test.size() != d.manifest.n_test) {
    throw InputError("dataset " + dir.string() + ": counts do not match manifest");
  }
  return d;
}

std::vector<Example> to_examples(std::span<const Scenario> scenarios, const VocabSpec& vocab) {
  std::vector<Example> out;
  out.reserve(scenarios.size());
  for (const Scenario& s : scenarios) out.push_back(s.to_example(vocab));
  return out;
}

}  // namespace gcl
