#include "gcl/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "gcl/error.hpp"
#include "gcl/hash.hpp"

namespace gcl {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw ConfigError("config: invalid value '" + std::string(value) + "' for key '" +
                    std::string(key) + "'");
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    bad_value(key, v);
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string label_for(const AblationSetting& s) {
  std::string out = "sup";
  if (s.weights.lambda_gsl > 0.0 && s.weights.lambda_drl > 0.0) out = "gco";
  else if (s.weights.lambda_gsl > 0.0) out += "+gsl";
  else if (s.weights.lambda_drl > 0.0) out += "+drl";
  if (s.ago) out += "+ago";
  return out;
}

// Value codecs, one pair per field type.
template <class T>
void parse_into(std::string_view key, std::string_view v, T& out) {
  if constexpr (std::is_same_v<T, bool>) {
    if (v == "true" || v == "1") out = true;
    else if (v == "false" || v == "0") out = false;
    else bad_value(key, v);
  } else if constexpr (std::is_unsigned_v<T>) {
    T parsed{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
    if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v);
    out = parsed;
  } else if constexpr (std::is_same_v<T, int>) {
    int parsed{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
    if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v);
    out = parsed;
  } else if constexpr (std::is_same_v<T, double>) {
    out = parse_double(key, v);
  } else if constexpr (std::is_same_v<T, std::string>) {
    out = std::string(v);
  } else if constexpr (std::is_same_v<T, RunMode>) {
    if (v == "sft") out = RunMode::sft;
    else if (v == "gcl") out = RunMode::gcl;
    else bad_value(key, v);
  } else if constexpr (std::is_same_v<T, std::optional<double>>) {
    if (v.empty() || v == "none") out.reset();
    else out = parse_double(key, v);
  } else if constexpr (std::is_same_v<T, std::vector<double>>) {
    out.clear();
    if (v.empty()) return;
    for (auto item : split(v, ',')) out.push_back(parse_double(key, item));
  } else if constexpr (std::is_same_v<T, std::vector<AblationSetting>>) {
    out.clear();
    if (v.empty()) return;
    for (auto item : split(v, ',')) {
      const auto parts = split(item, '/');
      if (parts.size() != 3 && parts.size() != 4) bad_value(key, item);
      AblationSetting s;
      s.weights = {parse_double(key, parts[0]), parse_double(key, parts[1]),
                   parse_double(key, parts[2])};
      if (parts.size() == 4) {
        if (parts[3] != "ago") bad_value(key, item);
        s.ago = true;
      }
      out.push_back(s);
    }
  } else {
    static_assert(!sizeof(T), "unsupported config field type");
  }
}

template <class T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_integral_v<T>) {
    return std::to_string(v);
  } else if constexpr (std::is_same_v<T, double>) {
    return format_double(v);
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, RunMode>) {
    return to_string(v);
  } else if constexpr (std::is_same_v<T, std::optional<double>>) {
    return v ? format_double(*v) : "none";
  } else if constexpr (std::is_same_v<T, std::vector<double>>) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
    return out;
  } else if constexpr (std::is_same_v<T, std::vector<AblationSetting>>) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const LossWeights& w = v[i].weights;
      out += (i ? "," : "") + format_double(w.lambda_sup) + "/" +
             format_double(w.lambda_gsl) + "/" + format_double(w.lambda_drl);
      if (v[i].ago) out += "/ago";
    }
    return out;
  }
}

template <class Config, class F>
void visit_fields(Config& c, F&& f) {
  f("mode", c.mode);
  f("seed", c.seed);
  f("data_dir", c.data_dir);
  f("data_seed", c.data_seed);
  f("n_train", c.n_train);
  f("n_test", c.n_test);
  f("gen.rows", c.knobs.rows);
  f("gen.cols", c.knobs.cols);
  f("gen.max_pedestrians", c.knobs.max_pedestrians);
  f("gen.min_obstacles", c.knobs.min_obstacles);
  f("gen.max_obstacles", c.knobs.max_obstacles);
  f("gen.max_doors", c.knobs.max_doors);
  f("gen.multiplicity", c.knobs.multiplicity);
  f("gen.max_retries", c.knobs.max_retries);
  f("vocab", c.vocab);
  for (auto [prefix, m] : {std::pair{"model_a.", &c.model_a}, std::pair{"model_b.", &c.model_b}}) {
    const std::string p(prefix);
    f(p + "layers", m->layers);
    f(p + "d_model", m->d_model);
    f(p + "heads", m->heads);
    f(p + "max_seq_len", m->max_seq_len);
    f(p + "ffn_mult", m->ffn_mult);
    f(p + "tie_output", m->tie_output);
  }
  f("d_proj", c.d_proj);
  f("lambda_sup", c.weights.lambda_sup);
  f("lambda_gsl", c.weights.lambda_gsl);
  f("lambda_drl", c.weights.lambda_drl);
  f("scaled_drl", c.scaled_drl);
  f("tau_gsl", c.tau_gsl);
  f("symmetric_gsl", c.symmetric_gsl);
  f("eta_sft", c.eta_sft);
  f("eta_guide", c.eta_guide);
  f("lr_ratio", c.lr_ratio);
  f("lr_scale", c.lr_scale);
  f("tau_small", c.tau_small);
  f("tau_large", c.tau_large);
  f("tau_learner", c.tau_learner);
  f("tau_guide", c.tau_guide);
  f("tau_standard", c.tau_standard);
  f("epochs", c.epochs);
  f("batch_size", c.batch_size);
  f("warmup_ratio", c.warmup_ratio);
  f("grad_clip", c.grad_clip);
  f("weight_decay", c.weight_decay);
  f("sft_report", c.sft_report);
  f("sft_score_a", c.sft_score_a);
  f("sft_score_b", c.sft_score_b);
  f("embed_dim", c.embed_dim);
  f("embed_seed", c.embed_seed);
  f("eval_every", c.eval_every);
  f("out_dir", c.out_dir);
  f("save_checkpoints", c.save_checkpoints);
  f("lr_ratios", c.lr_ratios);
  f("tau_learner_grid", c.tau_learner_grid);
  f("tau_guide_grid", c.tau_guide_grid);
  f("ablations", c.ablations);
}

}  // namespace

std::string AblationSetting::label() const { return label_for(*this); }

std::vector<AblationSetting> default_ablations() {
  return {{{1.0, 0.0, 0.0}, false},
          {{1.0, 0.5, 0.0}, false},
          {{1.0, 0.0, 0.4}, false},
          {{1.0, 0.5, 0.4}, false},
          {{1.0, 0.5, 0.4}, true}};
}

std::string to_string(RunMode mode) { return mode == RunMode::sft ? "sft" : "gcl"; }

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  require(batch_size >= 1, "batch_size must be >= 1");
  require(epochs >= 1, "epochs must be >= 1");
  require(n_train >= 1 && n_test >= 1, "n_train and n_test must be >= 1");
  require(eta_sft > 0 && eta_guide > 0 && lr_ratio > 0 && lr_scale > 0,
          "learning rates, lr_ratio and lr_scale must be > 0");
  require(tau_small > 0 && tau_large > 0 && tau_standard > 0 && tau_gsl > 0,
          "temperatures must be > 0");
  require(tau_learner >= 0 && tau_guide >= 0, "tau overrides must be >= 0");
  require(warmup_ratio >= 0 && warmup_ratio < 1, "warmup_ratio must lie in [0, 1)");
  require(weight_decay >= 0, "weight_decay must be >= 0");
  require(d_proj >= 1 && embed_dim >= 1, "d_proj and embed_dim must be >= 1");
  require(!lr_ratios.empty(), "lr_ratios must be nonempty");
  for (double r : lr_ratios) require(r > 0, "lr_ratios must be > 0");
  require(!tau_learner_grid.empty() && !tau_guide_grid.empty(), "tau grids must be nonempty");
  for (double t : tau_learner_grid) require(t > 0, "tau grid values must be > 0");
  for (double t : tau_guide_grid) require(t > 0, "tau grid values must be > 0");
  for (const auto& s : ablations) s.weights.validate();
  weights.validate();
  knobs.validate();
  vocab_spec().validate();
  member_config(0).validate();
  member_config(1).validate();
  if (!data_dir.empty()) {
    require(std::filesystem::exists(std::filesystem::path(data_dir) / "manifest.json"),
            "data_dir has no manifest.json: " + data_dir);
  }
  if (!sft_report.empty()) {
    require(std::filesystem::exists(sft_report), "sft_report not found: " + sft_report);
  }
}

VocabSpec RunConfig::vocab_spec() const {
  VocabSpec v;
  v.size = vocab;
  v.visual_count = kCellKinds;
  return v;
}

ModelConfig RunConfig::member_config(std::size_t k) const {
  ModelConfig m = k == 0 ? model_a : model_b;
  m.vocab = vocab;
  return m;
}

StepOptions RunConfig::step_options() const {
  StepOptions o;
  o.objective.weights = weights;
  o.objective.tau_gsl = tau_gsl;
  o.objective.scaled_drl = scaled_drl;
  o.objective.symmetric_gsl = symmetric_gsl;
  o.grad_clip = grad_clip;
  return o;
}

RunConfig parse_config(std::string_view text) {
  RunConfig c;
  c.ablations = default_ablations();
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const std::string_view raw =
        text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    ++line_no;
    const std::string_view line = trim(raw);
    if (!line.empty() && line.front() != '#') {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
      }
      const std::string_view key = trim(line.substr(0, eq));
      const std::string_view value = trim(line.substr(eq + 1));
      bool matched = false;
      visit_fields(c, [&](const std::string& name, auto& field) {
        if (name == key) {
          parse_into(key, value, field);
          matched = true;
        }
      });
      if (!matched) throw ConfigError("config: unknown key '" + std::string(key) + "'");
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  c.source_text = std::string(text);
  return c;
}

RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig base;
  base.source_text = ss.str();
  return with_overrides(base, overrides);
}

RunConfig with_overrides(const RunConfig& base, const std::vector<std::string>& overrides) {
  std::string text = base.source_text.empty() ? serialize_config(base) : base.source_text;
  for (const std::string& line : overrides) {
    if (!text.empty() && text.back() != '\n') text += '\n';
    text += line;
    text += '\n';
  }
  return parse_config(text);
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  visit_fields(config, [&](const std::string& name, const auto& field) {
    out += name + " = " + format_value(field) + "\n";
  });
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  RunConfig c;
  visit_fields(c, [&](const std::string& name, auto&) { keys.push_back(name); });
  return keys;
}

std::string run_id(const RunConfig& config) {
  RunConfig keyed = config;
  keyed.out_dir.clear();
  return hex64(fnv1a64(serialize_config(keyed)));
}

}  // namespace gcl
