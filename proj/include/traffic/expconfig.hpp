#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "traffic/errors.hpp"
#include "traffic/hyperopt.hpp"
#include "traffic/sim.hpp"
#include "traffic/strategies.hpp"
#include "traffic/util.hpp"

namespace traffic {

// Experiment files are flat sectioned key=value text:
//   - '#' starts a comment (whole line or trailing)
//   - '[section]' opens a section, 'key = value' assigns inside it
//   - unknown sections or keys are errors
// Grammar details and all recognized keys are documented in the README.

namespace detail {

struct RawSection {
  std::map<std::string, std::pair<std::string, size_t>> entries;  // key -> (value, line)
};

struct RawConfig {
  std::string file;
  std::map<std::string, RawSection> sections;
};

inline RawConfig parse_raw_config(const std::string& content, const std::string& file) {
  RawConfig raw;
  raw.file = file;
  std::string current;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= content.size()) {
    size_t eol = content.find('\n', pos);
    if (eol == std::string::npos) eol = content.size();
    std::string_view line(content.data() + pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) {
      if (pos > content.size()) break;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ParseError(file, line_no, "malformed section header");
      current = std::string(trim(line.substr(1, line.size() - 2)));
      raw.sections[current];  // empty sections are allowed
    } else {
      auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ParseError(file, line_no, "expected key = value");
      if (current.empty()) throw ParseError(file, line_no, "key outside any section");
      std::string key(trim(line.substr(0, eq)));
      std::string value(trim(line.substr(eq + 1)));
      if (key.empty()) throw ParseError(file, line_no, "empty key");
      auto& sec = raw.sections[current];
      if (sec.entries.count(key)) throw ParseError(file, line_no, "duplicate key '" + key + "'");
      sec.entries[key] = {value, line_no};
    }
    if (pos > content.size()) break;
  }
  return raw;
}

class SectionReader {
 public:
  SectionReader(const RawConfig& raw, const std::string& name) : file_(raw.file), name_(name) {
    auto it = raw.sections.find(name);
    if (it != raw.sections.end()) section_ = &it->second;
  }

  bool present() const { return section_ != nullptr; }

  bool has(const std::string& key) const { return section_ && section_->entries.count(key); }

  std::string get_string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    used_.insert(key);
    return section_->entries.at(key).first;
  }

  int64_t get_int(const std::string& key, int64_t fallback) {
    if (!has(key)) return fallback;
    used_.insert(key);
    const auto& [value, line] = section_->entries.at(key);
    auto v = parse_int(value);
    if (!v) throw ParseError(file_, line, "[" + name_ + "] " + key + ": expected integer");
    return *v;
  }

  uint64_t get_u64(const std::string& key, uint64_t fallback) {
    if (!has(key)) return fallback;
    used_.insert(key);
    const auto& [value, line] = section_->entries.at(key);
    auto v = parse_u64(value);
    if (!v)
      throw ParseError(file_, line, "[" + name_ + "] " + key + ": expected unsigned integer");
    return *v;
  }

  double get_double(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    used_.insert(key);
    const auto& [value, line] = section_->entries.at(key);
    auto v = parse_double(value);
    if (!v) throw ParseError(file_, line, "[" + name_ + "] " + key + ": expected number");
    return *v;
  }

  void finish() const {
    if (!section_) return;
    for (const auto& [key, entry] : section_->entries)
      if (!used_.count(key))
        throw ParseError(file_, entry.second, "[" + name_ + "] unknown key '" + key + "'");
  }

  const std::map<std::string, std::pair<std::string, size_t>>& entries() const {
    static const std::map<std::string, std::pair<std::string, size_t>> empty;
    return section_ ? section_->entries : empty;
  }

  void mark_used(const std::string& key) { used_.insert(key); }

 private:
  std::string file_;
  std::string name_;
  const RawSection* section_ = nullptr;
  std::set<std::string> used_;
};

// "1,3,6" and "1..11" (both combinable by commas)
inline std::vector<int> parse_int_list(const std::string& text, const std::string& file,
                                       size_t line) {
  std::vector<int> out;
  for (const std::string& token : split(text, ',')) {
    std::string_view t = trim(token);
    if (t.empty()) throw ParseError(file, line, "empty list element");
    if (auto dots = t.find(".."); dots != std::string_view::npos) {
      auto lo = parse_int(t.substr(0, dots));
      auto hi = parse_int(t.substr(dots + 2));
      if (!lo || !hi || *lo > *hi) throw ParseError(file, line, "malformed range '" + std::string(t) + "'");
      for (int64_t v = *lo; v <= *hi; ++v) out.push_back(static_cast<int>(v));
    } else {
      auto v = parse_int(t);
      if (!v) throw ParseError(file, line, "expected integer, got '" + std::string(t) + "'");
      out.push_back(static_cast<int>(*v));
    }
  }
  return out;
}

}  // namespace detail

enum class StrategyKind { transfer, multiagent };

inline const char* strategy_name(StrategyKind s) {
  return s == StrategyKind::transfer ? "transfer" : "multiagent";
}

struct ExperimentConfig {
  SimConfig sim;
  bool has_hyper = false;
  HyperConfig hyper;
  SearchSpace space = SearchSpace::defaults();
  int search_samples = 15;
  int search_top = 5;
  EAConfig ea;
  StrategyKind strategy = StrategyKind::transfer;
  std::vector<int> n_agents = {1};
  RewardMode reward_mode = RewardMode::joint;
  int target_update_period = 0;
  int folds = 5;
  int64_t eval_ticks = 10000;
  bool write_logs = true;
  uint64_t master_seed = 1;
  std::string out_dir = "out";

  static ExperimentConfig load(const std::string& path) {
    return from_text(read_file(path), path);
  }

  static ExperimentConfig from_text(const std::string& content, const std::string& file) {
    using detail::SectionReader;
    const detail::RawConfig raw = detail::parse_raw_config(content, file);
    static const std::set<std::string> known = {"sim",      "hyper", "space", "search", "ea",
                                                "strategy", "eval",  "seeds", "out"};
    for (const auto& [name, _] : raw.sections)
      if (!known.count(name)) throw ParseError(file, 0, "unknown section [" + name + "]");

    ExperimentConfig cfg;

    SectionReader sim(raw, "sim");
    cfg.sim.lanes = static_cast<int>(sim.get_int("lanes", cfg.sim.lanes));
    cfg.sim.road_patches = static_cast<int>(sim.get_int("road_patches", cfg.sim.road_patches));
    cfg.sim.n_vehicles = static_cast<int>(sim.get_int("n_vehicles", cfg.sim.n_vehicles));
    cfg.sim.vehicle_length = static_cast<int>(sim.get_int("vehicle_length", cfg.sim.vehicle_length));
    cfg.sim.tick_seconds = sim.get_double("tick_seconds", cfg.sim.tick_seconds);
    cfg.sim.max_speed = sim.get_double("max_speed", cfg.sim.max_speed);
    cfg.sim.accel_step = sim.get_double("accel_step", cfg.sim.accel_step);
    cfg.sim.patch_length = sim.get_double("patch_length", cfg.sim.patch_length);
    cfg.sim.safety_ahead = static_cast<int>(sim.get_int("safety_ahead", cfg.sim.safety_ahead));
    cfg.sim.safety_side = static_cast<int>(sim.get_int("safety_side", cfg.sim.safety_side));
    cfg.sim.init_speed_min = sim.get_double("init_speed_min", cfg.sim.init_speed_min);
    cfg.sim.init_speed_max = sim.get_double("init_speed_max", cfg.sim.init_speed_max);
    sim.finish();

    SectionReader space(raw, "space");
    for (const auto& [key, entry] : space.entries()) {
      const auto& [value, line] = entry;
      space.mark_used(key);
      if (cfg.space.find(key) == nullptr)
        throw ParseError(file, line, "[space] unknown hyperparameter '" + key + "'");
      if (auto dots = value.find(".."); dots != std::string::npos) {
        auto lo = parse_double(value.substr(0, dots));
        auto hi = parse_double(value.substr(dots + 2));
        if (!lo || !hi) throw ParseError(file, line, "[space] malformed interval");
        cfg.space.set_bounds(key, *lo, *hi);
      } else {
        auto v = parse_double(value);
        if (!v) throw ParseError(file, line, "[space] expected value or lo..hi interval");
        cfg.space.set_bounds(key, *v, *v);
      }
    }
    space.finish();

    SectionReader hyper(raw, "hyper");
    if (hyper.present()) {
      cfg.has_hyper = true;
      HyperConfig& h = cfg.hyper;
      h.lanes_side = static_cast<int>(hyper.get_int("lanes_side", h.lanes_side));
      h.patches_ahead = static_cast<int>(hyper.get_int("patches_ahead", h.patches_ahead));
      h.patches_behind = static_cast<int>(hyper.get_int("patches_behind", h.patches_behind));
      h.train_iterations = static_cast<int>(hyper.get_int("train_iterations", h.train_iterations));
      h.temporal_window = static_cast<int>(hyper.get_int("temporal_window", h.temporal_window));
      h.num_neurons = static_cast<int>(hyper.get_int("num_neurons", h.num_neurons));
      h.learning_rate = hyper.get_double("learning_rate", h.learning_rate);
      h.momentum = hyper.get_double("momentum", h.momentum);
      h.batch_size = static_cast<int>(hyper.get_int("batch_size", h.batch_size));
      h.l2_decay = hyper.get_double("l2_decay", h.l2_decay);
      h.experience_size = static_cast<int>(hyper.get_int("experience_size", h.experience_size));
      h.start_learn_threshold =
          static_cast<int>(hyper.get_int("start_learn_threshold", h.start_learn_threshold));
      h.gamma = hyper.get_double("gamma", h.gamma);
      h.learning_steps_total =
          static_cast<int>(hyper.get_int("learning_steps_total", h.learning_steps_total));
      h.learning_steps_burnin =
          static_cast<int>(hyper.get_int("learning_steps_burnin", h.learning_steps_burnin));
      h.epsilon_min = hyper.get_double("epsilon_min", h.epsilon_min);
      h.epsilon_test_time = hyper.get_double("epsilon_test_time", h.epsilon_test_time);
      h.number_of_layers = static_cast<int>(hyper.get_int("number_of_layers", h.number_of_layers));
      hyper.finish();
    }

    SectionReader search(raw, "search");
    cfg.search_samples = static_cast<int>(search.get_int("random_samples", cfg.search_samples));
    cfg.search_top = static_cast<int>(search.get_int("top", cfg.search_top));
    search.finish();

    SectionReader ea(raw, "ea");
    cfg.ea.mu = static_cast<int>(ea.get_int("mu", cfg.ea.mu));
    cfg.ea.p_cross = ea.get_double("p_cross", cfg.ea.p_cross);
    cfg.ea.p_mut = ea.get_double("p_mut", cfg.ea.p_mut);
    cfg.ea.generations = static_cast<int>(ea.get_int("generations", cfg.ea.generations));
    ea.finish();

    SectionReader strat(raw, "strategy");
    const std::string kind = strat.get_string("kind", "transfer");
    if (kind == "transfer")
      cfg.strategy = StrategyKind::transfer;
    else if (kind == "multiagent")
      cfg.strategy = StrategyKind::multiagent;
    else
      throw ConfigError("strategy.kind must be 'transfer' or 'multiagent'");
    if (strat.has("n_agents")) {
      const auto& [value, line] = strat.entries().at("n_agents");
      strat.mark_used("n_agents");
      cfg.n_agents = detail::parse_int_list(value, file, line);
    }
    const std::string mode = strat.get_string("reward_mode", "joint");
    if (mode == "joint")
      cfg.reward_mode = RewardMode::joint;
    else if (mode == "individual")
      cfg.reward_mode = RewardMode::individual;
    else
      throw ConfigError("strategy.reward_mode must be 'joint' or 'individual'");
    cfg.target_update_period =
        static_cast<int>(strat.get_int("target_update_period", cfg.target_update_period));
    strat.finish();

    SectionReader eval(raw, "eval");
    cfg.folds = static_cast<int>(eval.get_int("folds", cfg.folds));
    cfg.eval_ticks = eval.get_int("eval_ticks", cfg.eval_ticks);
    const std::string logs = eval.get_string("write_logs", cfg.write_logs ? "true" : "false");
    if (logs == "true")
      cfg.write_logs = true;
    else if (logs == "false")
      cfg.write_logs = false;
    else
      throw ConfigError("eval.write_logs must be 'true' or 'false'");
    eval.finish();

    SectionReader seeds(raw, "seeds");
    cfg.master_seed = seeds.get_u64("master", cfg.master_seed);
    seeds.finish();

    SectionReader out(raw, "out");
    cfg.out_dir = out.get_string("dir", cfg.out_dir);
    out.finish();

    cfg.validate();
    return cfg;
  }

  void validate() const {
    sim.validate();
    if (has_hyper) space.validate_config(hyper);
    if (search_samples < 1) throw ConfigError("search.random_samples must be >= 1");
    if (search_top < 1 || search_top > search_samples)
      throw ConfigError("search.top must be in [1, random_samples]");
    ea.validate();
    if (ea.mu != search_top)
      throw ConfigError("ea.mu must equal search.top (the selected population seeds the EA)");
    if (n_agents.empty()) throw ConfigError("strategy.n_agents must not be empty");
    for (int n : n_agents)
      if (n < 1 || n > 11) throw ConfigError("strategy.n_agents values must be in [1, 11]");
    for (int n : n_agents)
      if (n > sim.n_vehicles)
        throw ConfigError("strategy.n_agents cannot exceed sim.n_vehicles");
    if (target_update_period < 0) throw ConfigError("strategy.target_update_period must be >= 0");
    if (folds < 1) throw ConfigError("eval.folds must be >= 1");
    if (eval_ticks < 1) throw ConfigError("eval.eval_ticks must be >= 1");
    if (out_dir.empty()) throw ConfigError("out.dir must not be empty");
  }
};

/// [hyper] section text for a configuration; reals carry full precision so
/// the fragment reproduces the exact in-memory values.
inline std::string hyper_fragment(const HyperConfig& h) {
  std::string out = "[hyper]\n";
  char buf[64];
  auto put_int = [&](const char* k, int64_t v) {
    out += k;
    snprintf(buf, sizeof(buf), " = %lld\n", static_cast<long long>(v));
    out += buf;
  };
  auto put_real = [&](const char* k, double v) {
    out += k;
    snprintf(buf, sizeof(buf), " = %.17g\n", v);
    out += buf;
  };
  put_int("lanes_side", h.lanes_side);
  put_int("patches_ahead", h.patches_ahead);
  put_int("patches_behind", h.patches_behind);
  put_int("train_iterations", h.train_iterations);
  put_int("temporal_window", h.temporal_window);
  put_int("num_neurons", h.num_neurons);
  put_real("learning_rate", h.learning_rate);
  put_real("momentum", h.momentum);
  put_int("batch_size", h.batch_size);
  put_real("l2_decay", h.l2_decay);
  put_int("experience_size", h.experience_size);
  put_int("start_learn_threshold", h.start_learn_threshold);
  put_real("gamma", h.gamma);
  put_int("learning_steps_total", h.learning_steps_total);
  put_int("learning_steps_burnin", h.learning_steps_burnin);
  put_real("epsilon_min", h.epsilon_min);
  put_real("epsilon_test_time", h.epsilon_test_time);
  put_int("number_of_layers", h.number_of_layers);
  return out;
}

}  // namespace traffic
