#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>

#include "traffic/hyperopt.hpp"
#include "traffic/strategies.hpp"

namespace traffic {

/// Memoized fitness results keyed by the exact (config, seed) encoding.
class FitnessCache {
 public:
  bool lookup(const HyperConfig& cfg, uint64_t seed, double& out) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = map_.find(key(cfg, seed));
    if (it == map_.end()) return false;
    out = it->second;
    return true;
  }

  void store(const HyperConfig& cfg, uint64_t seed, double fitness) {
    std::lock_guard<std::mutex> lock(mutex_);
    map_.emplace(key(cfg, seed), fitness);
  }

  size_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return map_.size();
  }

 private:
  static std::string key(const HyperConfig& cfg, uint64_t seed) {
    std::string k = cfg.encode();
    put_u64(k, seed);
    return k;
  }

  mutable std::mutex mutex_;
  std::map<std::string, double> map_;
};

using TrainerFn = std::function<TrainResult(const HyperConfig&, uint64_t, const SimConfig&)>;

struct FitnessOptions {
  SimConfig base_sim{};
  int folds = 5;
  int64_t eval_ticks = 10000;
  uint64_t seed = 0;
  TrainerFn trainer;  // defaults to train_core
};

/// Train a single-agent core on the candidate configuration and score it by
/// the mean 5-fold evaluation speed in mph. Diverged training scores 0 mph
/// (worst) instead of aborting the search.
inline double fitness_of(const HyperConfig& lambda, const FitnessOptions& opts,
                         FitnessCache* cache = nullptr,
                         std::atomic<uint64_t>* diverged_count = nullptr) {
  double cached = 0.0;
  if (cache && cache->lookup(lambda, opts.seed, cached)) return cached;

  double fitness = 0.0;
  TrainResult trained =
      opts.trainer ? opts.trainer(lambda, derive_seed(opts.seed, 0x7a11), opts.base_sim)
                   : train_core(lambda, derive_seed(opts.seed, 0x7a11), opts.base_sim);
  if (trained.diverged) {
    if (diverged_count) diverged_count->fetch_add(1);
  } else {
    Policy policy{trained.net, lambda.observation_spec(), lambda.epsilon_test_time};
    EvalOptions eopts;
    eopts.base_sim = opts.base_sim;
    eopts.folds = opts.folds;
    eopts.eval_ticks = opts.eval_ticks;
    eopts.base_seed = derive_seed(opts.seed, 0xe5a1);
    eopts.count_patterns = false;
    fitness = evaluate_policy(policy, 1, eopts).mean;
  }
  if (cache) cache->store(lambda, opts.seed, fitness);
  return fitness;
}

/// FitnessFn adapter for the search drivers.
inline FitnessFn make_training_fitness(const FitnessOptions& opts, FitnessCache* cache,
                                       std::atomic<uint64_t>* diverged_count = nullptr) {
  return [opts, cache, diverged_count](const HyperConfig& cfg) {
    return fitness_of(cfg, opts, cache, diverged_count);
  };
}

}  // namespace traffic
