#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "traffic/expconfig.hpp"
#include "traffic/fitness.hpp"
#include "traffic/hyperopt.hpp"
#include "traffic/model_io.hpp"
#include "traffic/patterns.hpp"
#include "traffic/strategies.hpp"
#include "traffic/util.hpp"

namespace traffic::cli {

struct Options {
  std::optional<uint64_t> seed;  // overrides [seeds] master
  std::optional<std::string> out_dir;
  int jobs = 1;
  bool dry_run = false;  // stub fitness in the search
  std::optional<std::string> strategy;
  std::optional<std::string> n_agents;  // list syntax, e.g. "1..11" or "1,3,6"
};

namespace detail {

inline ExperimentConfig apply_overrides(ExperimentConfig cfg, const Options& opts) {
  if (opts.seed) cfg.master_seed = *opts.seed;
  if (opts.out_dir) cfg.out_dir = *opts.out_dir;
  if (opts.strategy) {
    if (*opts.strategy == "transfer")
      cfg.strategy = StrategyKind::transfer;
    else if (*opts.strategy == "multiagent")
      cfg.strategy = StrategyKind::multiagent;
    else
      throw ConfigError("--strategy must be 'transfer' or 'multiagent'");
  }
  if (opts.n_agents) cfg.n_agents = traffic::detail::parse_int_list(*opts.n_agents, "--n-agents", 0);
  cfg.validate();
  return cfg;
}

inline std::string model_path(const ExperimentConfig& cfg, StrategyKind strategy, int n_agents) {
  if (strategy == StrategyKind::transfer) return cfg.out_dir + "/models/core.model";
  return cfg.out_dir + "/models/shared_n" + std::to_string(n_agents) + ".model";
}

inline std::string curve_path(const std::string& model) {
  return model.substr(0, model.size() - 6) + "_curve.csv";  // strips ".model"
}

inline uint64_t train_seed(const ExperimentConfig& cfg, StrategyKind strategy, int n_agents) {
  const uint64_t tag = strategy == StrategyKind::transfer ? 0 : static_cast<uint64_t>(n_agents);
  return derive_seed(derive_seed(cfg.master_seed, 0x7121), tag);
}

inline uint64_t eval_seed(const ExperimentConfig& cfg, StrategyKind strategy, int n_agents) {
  const uint64_t tag = (strategy == StrategyKind::transfer ? 0x100 : 0x200) +
                       static_cast<uint64_t>(n_agents);
  return derive_seed(derive_seed(cfg.master_seed, 0xe4a1), tag);
}

inline std::string curve_csv(const std::vector<double>& curve) {
  std::string out = "block_end_step,mean_reward\n";
  char buf[64];
  for (size_t i = 0; i < curve.size(); ++i) {
    snprintf(buf, sizeof(buf), "%zu,%.6f\n", (i + 1) * 1000, curve[i]);
    out += buf;
  }
  return out;
}

inline const std::vector<std::string>& gene_names() {
  static const std::vector<std::string> names = [] {
    const SearchSpace space = SearchSpace::defaults();
    std::vector<std::string> n;
    for (const GeneDef& g : space.genes()) n.push_back(g.name);
    return n;
  }();
  return names;
}

inline std::string gene_values_csv(const HyperConfig& h) {
  char buf[64];
  std::string out;
  auto put_i = [&](int64_t v) {
    snprintf(buf, sizeof(buf), ",%lld", static_cast<long long>(v));
    out += buf;
  };
  auto put_r = [&](double v) {
    snprintf(buf, sizeof(buf), ",%.17g", v);
    out += buf;
  };
  put_i(h.lanes_side);
  put_i(h.patches_ahead);
  put_i(h.patches_behind);
  put_i(h.train_iterations);
  put_i(h.temporal_window);
  put_i(h.num_neurons);
  put_r(h.learning_rate);
  put_r(h.momentum);
  put_i(h.batch_size);
  put_r(h.l2_decay);
  put_i(h.experience_size);
  put_i(h.start_learn_threshold);
  put_r(h.gamma);
  put_i(h.learning_steps_total);
  put_i(h.learning_steps_burnin);
  put_r(h.epsilon_min);
  put_r(h.epsilon_test_time);
  put_i(h.number_of_layers);
  return out;
}

}  // namespace detail

struct SearchArtifacts {
  HyperConfig best;
  double best_fitness = 0.0;
  uint64_t evaluations = 0;
};

/// search: k-fold random search, top selection, then the elitist EA; writes
/// search_log.csv, fig1_search.csv and best_lambda.cfg.
inline SearchArtifacts cmd_search(const ExperimentConfig& raw_cfg, const Options& opts) {
  const ExperimentConfig cfg = detail::apply_overrides(raw_cfg, opts);
  const uint64_t seed = derive_seed(cfg.master_seed, 0x5ea);

  FitnessCache cache;
  std::atomic<uint64_t> evaluations{0};
  std::atomic<uint64_t> diverged{0};
  FitnessFn fitness;
  if (opts.dry_run) {
    fitness = [&](const HyperConfig& h) {
      evaluations.fetch_add(1);
      return stub_fitness(h, cfg.space);
    };
  } else {
    FitnessOptions fopts;
    fopts.base_sim = cfg.sim;
    fopts.folds = cfg.folds;
    fopts.eval_ticks = cfg.eval_ticks;
    fopts.seed = derive_seed(cfg.master_seed, 0xf17);
    FitnessFn inner = make_training_fitness(fopts, &cache, &diverged);
    fitness = [&, inner](const HyperConfig& h) {
      evaluations.fetch_add(1);
      return inner(h);
    };
  }

  const std::vector<Scored> ranked =
      random_search(cfg.space, cfg.search_samples, seed, fitness, opts.jobs);
  const std::vector<Scored> top = select_top(ranked, cfg.search_top);
  const SearchHistory history =
      evolve(cfg.space, top, cfg.ea, fitness, derive_seed(seed, 0xea), opts.jobs);

  // search log: every scored candidate, labeled by search iteration
  std::string log = "iteration,candidate_index";
  for (const auto& name : detail::gene_names()) log += "," + name;
  log += ",fitness_mph\n";
  std::string fig1 = "iteration,min,mean,max\n";
  char buf[128];
  auto emit_iteration = [&](int iteration, const std::vector<Scored>& pop) {
    double lo = pop.front().fitness, hi = pop.front().fitness, sum = 0.0;
    for (size_t i = 0; i < pop.size(); ++i) {
      snprintf(buf, sizeof(buf), "%d,%zu", iteration, i);
      log += buf;
      log += detail::gene_values_csv(pop[i].config);
      snprintf(buf, sizeof(buf), ",%.4f\n", pop[i].fitness);
      log += buf;
      lo = std::min(lo, pop[i].fitness);
      hi = std::max(hi, pop[i].fitness);
      sum += pop[i].fitness;
    }
    snprintf(buf, sizeof(buf), "%d,%.4f,%.4f,%.4f\n", iteration, lo,
             sum / static_cast<double>(pop.size()), hi);
    fig1 += buf;
  };
  // iteration 0: random search; 1: the selected population; 2..: generations
  emit_iteration(0, ranked);
  for (size_t g = 0; g < history.iterations.size(); ++g)
    emit_iteration(static_cast<int>(g) + 1, history.iterations[g].population);

  write_file_atomic(cfg.out_dir + "/search_log.csv", log);
  write_file_atomic(cfg.out_dir + "/fig1_search.csv", fig1);

  SearchArtifacts art;
  art.best = top.front().config;
  art.best_fitness = top.front().fitness;
  for (const auto& it : history.iterations)
    for (const Scored& s : it.population)
      if (s.fitness > art.best_fitness) {
        art.best_fitness = s.fitness;
        art.best = s.config;
      }
  art.evaluations = evaluations.load();
  write_file_atomic(cfg.out_dir + "/best_lambda.cfg", hyper_fragment(art.best));

  if (history.aborted) throw std::runtime_error("search aborted: " + history.error);
  return art;
}

/// train: core network for the transfer strategy, or one shared network per
/// agent count for the multi-agent strategy. Writes model + learning curve.
inline std::vector<std::string> cmd_train(const ExperimentConfig& raw_cfg, const Options& opts) {
  const ExperimentConfig cfg = detail::apply_overrides(raw_cfg, opts);
  if (!cfg.has_hyper)
    throw ConfigError("train: no [hyper] section (run `search` first or provide one)");
  std::vector<std::string> models;
  const std::vector<int> counts =
      cfg.strategy == StrategyKind::transfer ? std::vector<int>{1} : cfg.n_agents;
  for (int n : counts) {
    const uint64_t seed = detail::train_seed(cfg, cfg.strategy, n);
    TrainResult result =
        cfg.strategy == StrategyKind::transfer
            ? train_core(cfg.hyper, seed, cfg.sim, cfg.target_update_period)
            : train_multiagent(cfg.hyper, n, cfg.reward_mode, seed, cfg.sim,
                               cfg.target_update_period);
    const std::string path = detail::model_path(cfg, cfg.strategy, n);
    write_file_atomic(detail::curve_path(path), detail::curve_csv(result.reward_curve));
    if (result.diverged)
      throw DivergenceError("training diverged (" + result.error + "); partial curve kept at " +
                            detail::curve_path(path));
    save_model(path, result.net, seed);
    models.push_back(path);
  }
  return models;
}

struct EvalArtifacts {
  std::vector<EvalReport> reports;  // one per n_agents value
};

/// evaluate: deploy (transfer) or load the shared policy per agent count and
/// run the folded evaluation; writes fig5_perf.csv, summary.json and
/// trajectory logs.
inline EvalArtifacts cmd_evaluate(const ExperimentConfig& raw_cfg, const Options& opts) {
  const ExperimentConfig cfg = detail::apply_overrides(raw_cfg, opts);
  if (!cfg.has_hyper)
    throw ConfigError("evaluate: no [hyper] section (observation geometry is required)");
  const ObservationSpec ospec = cfg.hyper.observation_spec();
  const int expected_dim = cfg.hyper.state_dim();
  const std::string strat = strategy_name(cfg.strategy);

  std::optional<LoadedModel> core;
  if (cfg.strategy == StrategyKind::transfer)
    core = load_model(detail::model_path(cfg, cfg.strategy, 1));

  EvalArtifacts art;
  std::string fig5 = "strategy,n_agents,fold,avg_speed_mph,n_cp\n";
  nlohmann::json summary = nlohmann::json::array();
  char buf[160];
  for (int n : cfg.n_agents) {
    const LoadedModel model =
        cfg.strategy == StrategyKind::transfer ? *core
                                               : load_model(detail::model_path(cfg, cfg.strategy, n));
    if (model.net.spec().input_dim != expected_dim)
      throw ModelCompatError("model input dimension " +
                             std::to_string(model.net.spec().input_dim) +
                             " does not match the configured observation state dimension " +
                             std::to_string(expected_dim));
    const Policy policy =
        cfg.strategy == StrategyKind::transfer
            ? deploy_transfer(model.net, n, ospec, cfg.hyper.epsilon_test_time)
            : Policy{model.net, ospec, cfg.hyper.epsilon_test_time};

    EvalOptions eopts;
    eopts.folds = cfg.folds;
    eopts.eval_ticks = cfg.eval_ticks;
    eopts.base_seed = detail::eval_seed(cfg, cfg.strategy, n);
    eopts.base_sim = cfg.sim;
    eopts.count_patterns = true;
    eopts.jobs = opts.jobs;
    if (cfg.write_logs) {
      eopts.log_dir = cfg.out_dir + "/logs";
      eopts.log_prefix = strat + "_n" + std::to_string(n);
    }
    const EvalReport report = evaluate_policy(policy, n, eopts);
    for (int f = 0; f < cfg.folds; ++f) {
      snprintf(buf, sizeof(buf), "%s,%d,%d,%.4f,%llu\n", strat.c_str(), n, f,
               report.fold_speeds[static_cast<size_t>(f)],
               static_cast<unsigned long long>(report.fold_ncp[static_cast<size_t>(f)]));
      fig5 += buf;
    }
    summary.push_back({{"strategy", strat},
                       {"n_agents", n},
                       {"min_mph", report.min},
                       {"mean_mph", report.mean},
                       {"max_mph", report.max},
                       {"spread_mph", report.spread}});
    art.reports.push_back(report);
  }
  write_file_atomic(cfg.out_dir + "/fig5_perf.csv", fig5);
  write_file_atomic(cfg.out_dir + "/summary.json", summary.dump(2) + "\n");
  return art;
}

/// analyze: congestion incidents, figure CSVs and regression slopes from the
/// trajectory logs written by evaluate.
inline void cmd_analyze(const ExperimentConfig& raw_cfg, const Options& opts) {
  const ExperimentConfig cfg = detail::apply_overrides(raw_cfg, opts);
  const patterns::Geometry geom = patterns::Geometry::from_sim(cfg.sim);
  namespace fs = std::filesystem;

  // logs/<strategy>_n<k>_fold<f>.csv, as written by evaluate
  struct Key {
    std::string strategy;
    int n_agents;
    bool operator<(const Key& o) const {
      return strategy != o.strategy ? strategy < o.strategy : n_agents < o.n_agents;
    }
  };
  std::map<Key, std::vector<patterns::CongestionEvent>> merged;
  const fs::path log_dir = fs::path(cfg.out_dir) / "logs";
  std::vector<fs::path> log_files;
  if (fs::exists(log_dir))
    for (const auto& entry : fs::directory_iterator(log_dir))
      if (entry.is_regular_file() && entry.path().extension() == ".csv")
        log_files.push_back(entry.path());
  std::sort(log_files.begin(), log_files.end());

  for (const fs::path& path : log_files) {
    const std::string stem = path.stem().string();
    const auto n_pos = stem.rfind("_n");
    const auto fold_pos = stem.rfind("_fold");
    if (n_pos == std::string::npos || fold_pos == std::string::npos || fold_pos < n_pos) continue;
    const auto n = parse_int(stem.substr(n_pos + 2, fold_pos - n_pos - 2));
    const auto fold = parse_int(stem.substr(fold_pos + 5));
    if (!n || !fold) continue;
    const std::string strategy = stem.substr(0, n_pos);

    const std::vector<TrajectoryRow> rows = read_trajectory_csv(path.string());
    std::set<int> policy_ids;
    for (int i = 0; i < static_cast<int>(*n); ++i) policy_ids.insert(i);
    const patterns::AnalysisResult res =
        patterns::analyze_rows(rows, geom, cfg.sim.tick_seconds, policy_ids);
    patterns::write_events_csv(cfg.out_dir + "/analysis/events_" + stem + ".csv", res.events);
    auto& bucket = merged[Key{strategy, static_cast<int>(*n)}];
    bucket.insert(bucket.end(), res.events.begin(), res.events.end());
  }

  std::vector<patterns::ReportRow> report;
  std::string fig7 = "strategy,n_agents,bin_lo,bin_hi,count\n";
  char buf[128];
  for (const auto& [key, events] : merged) {
    report.push_back(patterns::summarize_row(key.strategy, key.n_agents, events));
    const auto& row = report.back();
    for (int b = 0; b < patterns::kHistogramBins; ++b) {
      snprintf(buf, sizeof(buf), "%s,%d,%d,%d,%llu\n", key.strategy.c_str(), key.n_agents, b * 5,
               (b + 1) * 5, static_cast<unsigned long long>(row.bins[static_cast<size_t>(b)]));
      fig7 += buf;
    }
  }
  write_file_atomic(cfg.out_dir + "/fig6_congestion.csv", patterns::report_csv(report));
  write_file_atomic(cfg.out_dir + "/fig7_hist.csv", fig7);

  // regression of mean evaluation speed over the agent count, per strategy
  std::string regression = "strategy,slope_mph_per_agent,intercept_mph,n_points\n";
  const fs::path fig5_path = fs::path(cfg.out_dir) / "fig5_perf.csv";
  if (fs::exists(fig5_path)) {
    // mean fold speed per (strategy, n_agents)
    std::map<std::string, std::map<int, std::pair<double, int>>> acc;
    const std::string content = read_file(fig5_path);
    size_t line_no = 0;
    size_t pos = 0;
    while (pos < content.size()) {
      size_t eol = content.find('\n', pos);
      if (eol == std::string::npos) eol = content.size();
      std::string_view line = trim(std::string_view(content).substr(pos, eol - pos));
      pos = eol + 1;
      ++line_no;
      if (line.empty() || line_no == 1) continue;
      const auto fields = split(line, ',');
      if (fields.size() != 5) throw ParseError(fig5_path.string(), line_no, "expected 5 columns");
      const auto n = parse_int(fields[1]);
      const auto speed = parse_double(fields[3]);
      if (!n || !speed) throw ParseError(fig5_path.string(), line_no, "malformed row");
      auto& cell = acc[std::string(trim(fields[0]))][static_cast<int>(*n)];
      cell.first += *speed;
      cell.second += 1;
    }
    for (const auto& [strategy, by_n] : acc) {
      if (by_n.size() < 2) continue;
      std::vector<std::pair<double, double>> points;
      for (const auto& [n, cell] : by_n)
        points.emplace_back(static_cast<double>(n), cell.first / cell.second);
      const double slope = patterns::regression_slope(points);
      const double intercept = patterns::regression_intercept(points, slope);
      snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%zu\n", strategy.c_str(), slope, intercept,
               points.size());
      regression += buf;
    }
  }
  write_file_atomic(cfg.out_dir + "/regression.csv", regression);
}

/// run-all: search, then train/evaluate/analyze with the best configuration
/// found.
inline void cmd_run_all(const ExperimentConfig& raw_cfg, const Options& opts) {
  const SearchArtifacts search = cmd_search(raw_cfg, opts);
  ExperimentConfig cfg = raw_cfg;
  cfg.hyper = search.best;
  cfg.has_hyper = true;
  cfg.validate();
  cmd_train(cfg, opts);
  cmd_evaluate(cfg, opts);
  cmd_analyze(cfg, opts);
}

}  // namespace traffic::cli
