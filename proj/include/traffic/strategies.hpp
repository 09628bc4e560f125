#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "traffic/dqn.hpp"
#include "traffic/hyperopt.hpp"
#include "traffic/net.hpp"
#include "traffic/patterns.hpp"
#include "traffic/sim.hpp"
#include "traffic/trajectory.hpp"

namespace traffic {

enum class RewardMode {
  individual,  // r = own speed / max_speed
  joint,       // r = mean trained-agent speed / max_speed, same for all agents
};

inline const char* reward_mode_name(RewardMode m) {
  return m == RewardMode::individual ? "individual" : "joint";
}

/// World adapter for the training loop: the first n_agents vehicles are
/// policy-driven, the rest act randomly behind the same safety system.
class SimTrafficEnv {
 public:
  SimTrafficEnv(SimConfig base, ObservationSpec ospec, int n_agents, RewardMode mode)
      : cfg_(base), ospec_(ospec), n_agents_(n_agents), mode_(mode) {
    cfg_.n_controllable = n_agents;
  }

  int n_agents() const { return n_agents_; }
  int obs_dim() const { return ospec_.grid_cells(); }
  const World& world() const { return world_; }
  World& world_mut() { return world_; }  // test/setup hook

  void reset(uint64_t seed) {
    cfg_.rng_seed = seed;
    world_ = World::init(cfg_);
  }

  std::vector<double> observe(int agent) const {
    return world_.observe(agent, ospec_).values;
  }

  std::vector<double> step(const std::vector<Action>& actions) {
    const StepOutcome out = world_.step(actions);
    std::vector<double> rewards(static_cast<size_t>(n_agents_));
    if (mode_ == RewardMode::joint) {
      double total = 0.0;
      for (int i = 0; i < n_agents_; ++i) total += out.vehicles[static_cast<size_t>(i)].speed;
      const double r = total / static_cast<double>(n_agents_) / cfg_.max_speed;
      std::fill(rewards.begin(), rewards.end(), r);
    } else {
      for (int i = 0; i < n_agents_; ++i)
        rewards[static_cast<size_t>(i)] = out.vehicles[static_cast<size_t>(i)].speed / cfg_.max_speed;
    }
    return rewards;
  }

 private:
  SimConfig cfg_;
  ObservationSpec ospec_;
  int n_agents_;
  RewardMode mode_;
  World world_;
};

/// Joint training of one shared network across n_agents vehicles: every
/// agent acts individually on the same weights, all transitions share one
/// replay buffer and one optimizer stream.
inline TrainResult train_multiagent(const HyperConfig& lambda, int n_agents, RewardMode mode,
                                    uint64_t seed, const SimConfig& base_sim = SimConfig{},
                                    int target_update_period = 0) {
  if (n_agents < 1 || n_agents > 11)
    throw ConfigError("train_multiagent: n_agents must be in [1, 11]");
  SimTrafficEnv env(base_sim, lambda.observation_spec(), n_agents, mode);
  return train_dqn(env, lambda.net_spec(), lambda.schedule(target_update_period),
                   lambda.temporal_window, seed);
}

/// Single-agent training of the core network. Identical seeds give the same
/// weights as train_multiagent with one agent (a one-agent joint reward is
/// its own speed).
inline TrainResult train_core(const HyperConfig& lambda, uint64_t seed,
                              const SimConfig& base_sim = SimConfig{},
                              int target_update_period = 0) {
  return train_multiagent(lambda, 1, RewardMode::individual, seed, base_sim,
                          target_update_period);
}

/// A deployable policy: shared weights, observation geometry, and the
/// exploration rate used at evaluation time.
struct Policy {
  QNetwork net;
  ObservationSpec ospec;
  double eval_epsilon = 0.0;
};

/// Parameter sharing: every agent runs the same core weights, no further
/// training.
inline Policy deploy_transfer(const QNetwork& core, int n_agents, const ObservationSpec& ospec,
                              double eval_epsilon) {
  if (n_agents < 1 || n_agents > 11)
    throw ConfigError("deploy_transfer: n_agents must be in [1, 11]");
  return Policy{core, ospec, eval_epsilon};
}

struct EvalOptions {
  int folds = 5;
  int64_t eval_ticks = 10000;
  uint64_t base_seed = 0;  // fold f runs a fresh world seeded base_seed + f
  SimConfig base_sim{};
  bool count_patterns = true;
  std::string log_dir;  // empty: no trajectory logs written
  std::string log_prefix = "eval";
  int jobs = 1;
};

struct EvalReport {
  int n_agents = 0;
  std::vector<double> fold_speeds;  // mph, one per fold
  std::vector<uint64_t> fold_ncp;   // congestion incidents per fold
  double mean = 0.0, min = 0.0, max = 0.0, spread = 0.0;
  std::vector<std::string> log_paths;
};

/// Run one evaluation fold; returns the time-mean of the trained agents'
/// mean speed and optionally the full trajectory.
inline double run_eval_fold(const Policy& policy, int n_agents, const SimConfig& base_sim,
                            int64_t ticks, uint64_t world_seed,
                            std::vector<TrajectoryRow>* rows_out) {
  SimConfig cfg = base_sim;
  cfg.n_controllable = n_agents;
  cfg.rng_seed = world_seed;
  World world = World::init(cfg);
  Rng act_rng(derive_seed(world_seed, 0xac7));
  Workspace ws = policy.net.make_workspace();
  std::vector<StateBuilder> builders(
      static_cast<size_t>(n_agents),
      StateBuilder(policy.ospec.grid_cells(), policy.ospec.temporal_window));
  std::vector<Action> actions(static_cast<size_t>(n_agents));
  double speed_sum = 0.0;
  for (int64_t t = 0; t < ticks; ++t) {
    for (int i = 0; i < n_agents; ++i) {
      const std::vector<double> x = world.observe(i, policy.ospec).values;
      const std::vector<double> state = builders[static_cast<size_t>(i)].build(x);
      actions[static_cast<size_t>(i)] = act(policy.net, state, policy.eval_epsilon, act_rng, ws);
      builders[static_cast<size_t>(i)].push(x, actions[static_cast<size_t>(i)]);
    }
    const TickSnapshot snap = rows_out ? snapshot_world(world) : TickSnapshot{};
    const StepOutcome out = world.step(actions);
    if (rows_out) append_rows(*rows_out, snap, out);
    double tick_total = 0.0;
    for (int i = 0; i < n_agents; ++i) tick_total += out.vehicles[static_cast<size_t>(i)].speed;
    speed_sum += tick_total / static_cast<double>(n_agents);
  }
  return ticks > 0 ? speed_sum / static_cast<double>(ticks) : 0.0;
}

/// 5-fold (by default) evaluation: fold f runs eval_ticks on a fresh world
/// seeded base_seed + f; the fold score is the time-mean of the trained
/// agents' mean speed in mph.
inline EvalReport evaluate_policy(const Policy& policy, int n_agents, const EvalOptions& opts) {
  if (opts.folds < 1) throw ConfigError("evaluate: folds must be >= 1");
  if (n_agents < 1) throw ConfigError("evaluate: n_agents must be >= 1");
  EvalReport report;
  report.n_agents = n_agents;
  report.fold_speeds.resize(static_cast<size_t>(opts.folds));
  report.fold_ncp.assign(static_cast<size_t>(opts.folds), 0);
  report.log_paths.resize(static_cast<size_t>(opts.folds));

  const bool want_rows = opts.count_patterns || !opts.log_dir.empty();
  std::set<int> policy_ids;
  for (int i = 0; i < n_agents; ++i) policy_ids.insert(i);
  const patterns::Geometry geom = patterns::Geometry::from_sim(opts.base_sim);

  parallel_for(static_cast<size_t>(opts.folds), opts.jobs, [&](size_t f) {
    // forward passes share the weights read-only; every fold owns its workspace
    std::vector<TrajectoryRow> rows;
    const double score = run_eval_fold(policy, n_agents, opts.base_sim, opts.eval_ticks,
                                       opts.base_seed + f, want_rows ? &rows : nullptr);
    report.fold_speeds[f] = score;
    if (opts.count_patterns) {
      const auto analysis =
          patterns::analyze_rows(rows, geom, opts.base_sim.tick_seconds, policy_ids);
      report.fold_ncp[f] = analysis.events.size();
    }
    if (!opts.log_dir.empty()) {
      const std::string path =
          opts.log_dir + "/" + opts.log_prefix + "_fold" + std::to_string(f) + ".csv";
      write_trajectory_csv(path, rows);
      report.log_paths[f] = path;
    }
  });

  report.min = *std::min_element(report.fold_speeds.begin(), report.fold_speeds.end());
  report.max = *std::max_element(report.fold_speeds.begin(), report.fold_speeds.end());
  double sum = 0.0;
  for (double s : report.fold_speeds) sum += s;
  report.mean = sum / static_cast<double>(opts.folds);
  report.spread = report.max - report.min;
  return report;
}

/// Uniform-random baseline under the same seeds and protocol. Epsilon 1.0
/// means the network is never consulted.
inline EvalReport evaluate_random_baseline(int n_agents, const EvalOptions& opts) {
  NetSpec tiny{1, 0, 0, kNumActions};
  ObservationSpec minimal{0, 1, 0, 0};
  Policy rand_policy{QNetwork::zeros(tiny), minimal, 1.0};
  return evaluate_policy(rand_policy, n_agents, opts);
}

}  // namespace traffic
