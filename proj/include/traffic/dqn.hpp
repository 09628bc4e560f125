#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <span>
#include <utility>
#include <vector>

#include "traffic/errors.hpp"
#include "traffic/net.hpp"
#include "traffic/replay.hpp"
#include "traffic/rng.hpp"
#include "traffic/sim.hpp"

namespace traffic {

struct TrainSchedule {
  int train_iterations = 0;  // environment ticks, one optimizer step per tick
  double learning_rate = 0.0;
  double momentum = 0.0;
  int batch_size = 1;
  double l2_decay = 0.0;
  double gamma = 0.9;
  int experience_size = 1;        // replay memory capacity
  int start_learn_threshold = 0;  // minimum buffer size before updates
  int learning_steps_total = 0;   // epsilon reaches epsilon_min here
  int learning_steps_burnin = 0;  // epsilon held at 1.0 until here
  double epsilon_min = 0.0;
  double epsilon_test_time = 0.0;
  int target_update_period = 0;  // C; 0 = no separate target network

  void validate() const {
    if (train_iterations < 0) throw ConfigError("schedule: train_iterations must be >= 0");
    if (learning_rate < 0) throw ConfigError("schedule: learning_rate must be >= 0");
    if (momentum < 0 || momentum >= 1) throw ConfigError("schedule: momentum must be in [0,1)");
    if (batch_size < 1) throw ConfigError("schedule: batch_size must be >= 1");
    if (l2_decay < 0) throw ConfigError("schedule: l2_decay must be >= 0");
    if (gamma < 0.8 || gamma > 1.0) throw ConfigError("schedule: gamma must be in [0.8, 1]");
    if (experience_size < 1) throw ConfigError("schedule: experience_size must be >= 1");
    if (start_learn_threshold < 1) throw ConfigError("schedule: start_learn_threshold must be >= 1");
    if (learning_steps_burnin > learning_steps_total)
      throw ConfigError("schedule: learning_steps_burnin must be <= learning_steps_total");
    if (learning_steps_total > train_iterations)
      throw ConfigError("schedule: learning_steps_total must be <= train_iterations");
    if (epsilon_min < 0 || epsilon_min > 1) throw ConfigError("schedule: epsilon_min in [0,1]");
    if (epsilon_test_time < 0 || epsilon_test_time > 1)
      throw ConfigError("schedule: epsilon_test_time in [0,1]");
    if (target_update_period < 0) throw ConfigError("schedule: target_update_period must be >= 0");
  }
};

enum class RunMode { train, eval };

/// Exploration rate: 1.0 through the burn-in, linear down to epsilon_min at
/// learning_steps_total, constant afterwards. Eval mode uses the fixed
/// test-time rate.
inline double epsilon_at(int64_t step, const TrainSchedule& s, RunMode mode) {
  if (mode == RunMode::eval) return s.epsilon_test_time;
  if (step < s.learning_steps_burnin) return 1.0;
  if (step >= s.learning_steps_total) return s.epsilon_min;
  const double span = static_cast<double>(s.learning_steps_total - s.learning_steps_burnin);
  const double frac = static_cast<double>(step - s.learning_steps_burnin) / span;
  return 1.0 + (s.epsilon_min - 1.0) * frac;
}

inline Action act(const QNetwork& net, std::span<const double> state, double epsilon, Rng& rng,
                  Workspace& ws) {
  if (rng.bernoulli(epsilon)) return random_action(rng);
  return static_cast<Action>(net.greedy_action(state, ws));
}

/// State vector for temporal window w: the w most recent (x, one-hot action)
/// pairs in time order, zero-padded at the start of an episode, followed by
/// the current observation. w = 0 collapses to the observation itself.
inline std::vector<double> build_state(
    std::span<const std::pair<std::vector<double>, Action>> history,
    const std::vector<double>& current_x, int w) {
  if (w == 0) return current_x;
  const size_t n = current_x.size();
  const size_t slot = n + kNumActions;
  std::vector<double> state(static_cast<size_t>(w) * slot + n, 0.0);
  for (int k = 0; k < w; ++k) {
    const int64_t idx = static_cast<int64_t>(history.size()) - w + k;
    if (idx < 0) continue;  // padded
    const auto& [x, a] = history[static_cast<size_t>(idx)];
    double* dst = state.data() + static_cast<size_t>(k) * slot;
    std::copy(x.begin(), x.end(), dst);
    dst[n + static_cast<size_t>(a)] = 1.0;
  }
  std::copy(current_x.begin(), current_x.end(), state.end() - static_cast<int64_t>(n));
  return state;
}

/// Rolling (observation, action) history for one agent.
class StateBuilder {
 public:
  StateBuilder(int x_dim, int w) : x_dim_(x_dim), w_(w) {}

  int state_dim() const { return w_ * (x_dim_ + kNumActions) + x_dim_; }

  std::vector<double> build(const std::vector<double>& current_x) const {
    return build_state(std::span(history_.data(), history_.size()), current_x, w_);
  }

  void push(std::vector<double> x, Action a) {
    if (w_ == 0) return;
    history_.emplace_back(std::move(x), a);
    if (static_cast<int>(history_.size()) > w_) history_.erase(history_.begin());
  }

 private:
  int x_dim_;
  int w_;
  std::vector<std::pair<std::vector<double>, Action>> history_;
};

/// TD targets for a minibatch: r for terminal transitions, otherwise
/// r + gamma * max_a Q(s', a), evaluated with the target weights when the
/// network keeps them.
inline std::vector<double> td_targets(const QNetwork& net,
                                      const std::vector<const Transition*>& batch, double gamma,
                                      Workspace& ws) {
  std::vector<double> y(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    const Transition& t = *batch[i];
    if (t.terminal) {
      y[i] = t.reward;
    } else {
      y[i] = t.reward + gamma * net.max_q(t.next_state, ws, /*use_target=*/true);
    }
  }
  return y;
}

/// One optimizer step on a sampled minibatch; returns the pre-update loss.
inline double train_step(QNetwork& net, const std::vector<const Transition*>& batch,
                         const TrainSchedule& sched, Workspace& ws, GradBuffers& grads) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  MaskedBatch mb;
  mb.states.reserve(batch.size());
  mb.actions.reserve(batch.size());
  mb.targets = td_targets(net, batch, sched.gamma, ws);
  for (const Transition* t : batch) {
    mb.states.push_back(t->state.data());
    mb.actions.push_back(t->action);
  }
  return net.train_masked(mb, SgdHyper{sched.learning_rate, sched.momentum, sched.l2_decay}, ws,
                          grads);
}

struct TrainResult {
  QNetwork net;
  std::vector<double> reward_curve;  // mean stored reward per 1000-step block
  uint64_t transitions_stored = 0;
  uint64_t updates = 0;
  bool diverged = false;
  std::string error;
};

// Env concept:
//   int n_agents() const
//   int obs_dim() const
//   void reset(uint64_t seed)
//   std::vector<double> observe(int agent) const
//   std::vector<double> step(const std::vector<Action>&)   // per-agent rewards in [0,1]

/// Q-learning with experience replay: per tick each agent acts epsilon-
/// greedily on the shared network, every transition lands in one shared
/// buffer, and one minibatch update runs once the buffer has warmed up.
template <class Env>
TrainResult train_dqn(Env& env, const NetSpec& nspec, const TrainSchedule& sched,
                      int temporal_window, uint64_t seed) {
  nspec.validate();
  sched.validate();
  env.reset(derive_seed(seed, 1));
  QNetwork net(nspec, derive_seed(seed, 2));
  Rng act_rng(derive_seed(seed, 3));
  Rng replay_rng(derive_seed(seed, 4));
  if (sched.target_update_period > 0) net.enable_target();

  const int n_agents = env.n_agents();
  ReplayBuffer buffer(static_cast<size_t>(sched.experience_size));

  TrainResult result;
  Workspace ws = net.make_workspace();
  GradBuffers grads = net.make_grad_buffers();
  std::vector<StateBuilder> builders;
  for (int i = 0; i < n_agents; ++i) builders.emplace_back(env.obs_dim(), temporal_window);

  std::vector<Action> actions(static_cast<size_t>(n_agents));
  std::vector<std::vector<double>> xs(static_cast<size_t>(n_agents));
  std::vector<std::vector<double>> states(static_cast<size_t>(n_agents));

  double block_reward_sum = 0.0;
  uint64_t block_count = 0;

  for (int step_i = 0; step_i < sched.train_iterations; ++step_i) {
    const double eps = epsilon_at(step_i, sched, RunMode::train);
    for (int i = 0; i < n_agents; ++i) {
      xs[static_cast<size_t>(i)] = env.observe(i);
      states[static_cast<size_t>(i)] = builders[static_cast<size_t>(i)].build(xs[static_cast<size_t>(i)]);
      actions[static_cast<size_t>(i)] = act(net, states[static_cast<size_t>(i)], eps, act_rng, ws);
    }
    const std::vector<double> rewards = env.step(actions);
    for (int i = 0; i < n_agents; ++i) {
      builders[static_cast<size_t>(i)].push(std::move(xs[static_cast<size_t>(i)]),
                                            actions[static_cast<size_t>(i)]);
      Transition t;
      t.state = std::move(states[static_cast<size_t>(i)]);
      t.action = static_cast<int>(actions[static_cast<size_t>(i)]);
      t.reward = rewards[static_cast<size_t>(i)];
      t.next_state = builders[static_cast<size_t>(i)].build(env.observe(i));
      t.terminal = false;  // the driving task never terminates
      buffer.push(std::move(t));
      ++result.transitions_stored;
      block_reward_sum += rewards[static_cast<size_t>(i)];
      ++block_count;
    }
    if (buffer.size() >= static_cast<size_t>(sched.start_learn_threshold)) {
      auto batch = buffer.sample_minibatch(static_cast<size_t>(sched.batch_size), replay_rng);
      try {
        train_step(net, batch, sched, ws, grads);
      } catch (const DivergenceError& e) {
        result.diverged = true;
        result.error = e.what();
        break;
      }
      ++result.updates;
      if (sched.target_update_period > 0 &&
          result.updates % static_cast<uint64_t>(sched.target_update_period) == 0)
        net.sync_target();
    }
    if ((step_i + 1) % 1000 == 0) {
      result.reward_curve.push_back(block_count ? block_reward_sum / static_cast<double>(block_count) : 0.0);
      block_reward_sum = 0.0;
      block_count = 0;
    }
  }
  if (block_count > 0)
    result.reward_curve.push_back(block_reward_sum / static_cast<double>(block_count));
  if (!result.diverged && !net.finite()) {
    result.diverged = true;
    result.error = "non-finite network weights after training";
  }
  result.net = std::move(net);
  return result;
}

}  // namespace traffic
