#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "traffic/dqn.hpp"
#include "traffic/errors.hpp"
#include "traffic/net.hpp"
#include "traffic/rng.hpp"
#include "traffic/sim.hpp"
#include "traffic/util.hpp"

namespace traffic {

/// One point of the hyperparameter space: observation slice geometry,
/// network width/depth, and every training knob.
struct HyperConfig {
  int lanes_side = 3;
  int patches_ahead = 30;
  int patches_behind = 13;
  int train_iterations = 100000;
  int temporal_window = 0;
  int num_neurons = 21;
  double learning_rate = 0.00017;
  double momentum = 0.57;
  int batch_size = 53;
  double l2_decay = 0.01;
  int experience_size = 5000;
  int start_learn_threshold = 500;
  double gamma = 0.9;
  int learning_steps_total = 54129;
  int learning_steps_burnin = 1083;
  double epsilon_min = 0.86;
  double epsilon_test_time = 0.22;
  int number_of_layers = 7;  // total layers; hidden count is this minus 2

  /// Known-good reference configuration; also the field defaults above.
  static HyperConfig reference_optimum() { return HyperConfig{}; }

  ObservationSpec observation_spec() const {
    return ObservationSpec{lanes_side, patches_ahead, patches_behind, temporal_window};
  }

  int state_dim() const {
    const int x = observation_spec().grid_cells();
    return temporal_window * (x + kNumActions) + x;
  }

  NetSpec net_spec() const {
    return NetSpec{state_dim(), number_of_layers - 2, num_neurons, kNumActions};
  }

  TrainSchedule schedule(int target_update_period = 0) const {
    TrainSchedule s;
    s.train_iterations = train_iterations;
    s.learning_rate = learning_rate;
    s.momentum = momentum;
    s.batch_size = batch_size;
    s.l2_decay = l2_decay;
    s.gamma = gamma;
    s.experience_size = experience_size;
    s.start_learn_threshold = start_learn_threshold;
    s.learning_steps_total = learning_steps_total;
    s.learning_steps_burnin = learning_steps_burnin;
    s.epsilon_min = epsilon_min;
    s.epsilon_test_time = epsilon_test_time;
    s.target_update_period = target_update_period;
    return s;
  }

  /// Canonical byte encoding; exact cache/dedup key.
  std::string encode() const {
    std::string out;
    auto put_i = [&](int64_t v) { put_u64(out, static_cast<uint64_t>(v)); };
    put_i(lanes_side);
    put_i(patches_ahead);
    put_i(patches_behind);
    put_i(train_iterations);
    put_i(temporal_window);
    put_i(num_neurons);
    put_f64(out, learning_rate);
    put_f64(out, momentum);
    put_i(batch_size);
    put_f64(out, l2_decay);
    put_i(experience_size);
    put_i(start_learn_threshold);
    put_f64(out, gamma);
    put_i(learning_steps_total);
    put_i(learning_steps_burnin);
    put_f64(out, epsilon_min);
    put_f64(out, epsilon_test_time);
    put_i(number_of_layers);
    return out;
  }

  bool operator==(const HyperConfig&) const = default;
};

enum class GeneKind { int_range, real_range, fixed_int, fixed_real };

struct GeneDef {
  std::string name;
  GeneKind kind;
  double lo = 0.0;
  double hi = 0.0;
  bool log_scale = false;
  bool is_free() const { return kind == GeneKind::int_range || kind == GeneKind::real_range; }
};

namespace detail {

struct GeneAccess {
  double (*get)(const HyperConfig&);
  void (*set)(HyperConfig&, double);
};

// canonical gene order; sampling and mutation draw in this order
inline const std::vector<GeneAccess>& gene_accessors() {
  static const std::vector<GeneAccess> table = {
      {[](const HyperConfig& c) { return double(c.lanes_side); },
       [](HyperConfig& c, double v) { c.lanes_side = int(std::llround(v)); }},
      {[](const HyperConfig& c) { return double(c.patches_ahead); },
       [](HyperConfig& c, double v) { c.patches_ahead = int(std::llround(v)); }},
      {[](const HyperConfig& c) { return double(c.patches_behind); },
       [](HyperConfig& c, double v) { c.patches_behind = int(std::llround(v)); }},
      {[](const HyperConfig& c) { return double(c.train_iterations); },
       [](HyperConfig& c, double v) { c.train_iterations = int(std::llround(v)); }},
      {[](const HyperConfig& c) { return double(c.temporal_window); },
       [](HyperConfig& c, double v) { c.temporal_window = int(std::llround(v)); }},
      {[](const HyperConfig& c) { return double(c.num_neurons); },
       [](HyperConfig& c, double v) { c.num_neurons = int(std::llround(v)); }},
      {[](const HyperConfig& c) { return c.learning_rate; },
       [](HyperConfig& c, double v) { c.learning_rate = v; }},
      {[](const HyperConfig& c) { return c.momentum; },
       [](HyperConfig& c, double v) { c.momentum = v; }},
      {[](const HyperConfig& c) { return double(c.batch_size); },
       [](HyperConfig& c, double v) { c.batch_size = int(std::llround(v)); }},
      {[](const HyperConfig& c) { return c.l2_decay; },
       [](HyperConfig& c, double v) { c.l2_decay = v; }},
      {[](const HyperConfig& c) { return double(c.experience_size); },
       [](HyperConfig& c, double v) { c.experience_size = int(std::llround(v)); }},
      {[](const HyperConfig& c) { return double(c.start_learn_threshold); },
       [](HyperConfig& c, double v) { c.start_learn_threshold = int(std::llround(v)); }},
      {[](const HyperConfig& c) { return c.gamma; },
       [](HyperConfig& c, double v) { c.gamma = v; }},
      {[](const HyperConfig& c) { return double(c.learning_steps_total); },
       [](HyperConfig& c, double v) { c.learning_steps_total = int(std::llround(v)); }},
      {[](const HyperConfig& c) { return double(c.learning_steps_burnin); },
       [](HyperConfig& c, double v) { c.learning_steps_burnin = int(std::llround(v)); }},
      {[](const HyperConfig& c) { return c.epsilon_min; },
       [](HyperConfig& c, double v) { c.epsilon_min = v; }},
      {[](const HyperConfig& c) { return c.epsilon_test_time; },
       [](HyperConfig& c, double v) { c.epsilon_test_time = v; }},
      {[](const HyperConfig& c) { return double(c.number_of_layers); },
       [](HyperConfig& c, double v) { c.number_of_layers = int(std::llround(v)); }},
  };
  return table;
}

}  // namespace detail

/// Bounded search space. learning_steps_total and learning_steps_burnin have
/// bounds that depend on train_iterations (and on each other), re-validated
/// after every gene change.
class SearchSpace {
 public:
  static constexpr int kGeneTotal = 13;   // learning_steps_total index
  static constexpr int kGeneBurnin = 14;  // learning_steps_burnin index
  static constexpr int kGeneTrainIters = 3;

  /// Default bounds of the search.
  static SearchSpace defaults() {
    SearchSpace s;
    s.genes_ = {
        {"lanes_side", GeneKind::int_range, 3, 6, false},
        {"patches_ahead", GeneKind::int_range, 1, 55, false},
        {"patches_behind", GeneKind::int_range, 1, 20, false},
        {"train_iterations", GeneKind::int_range, 10000, 100000, false},
        {"temporal_window", GeneKind::fixed_int, 0, 0, false},
        {"num_neurons", GeneKind::int_range, 1, 100, false},
        {"learning_rate", GeneKind::real_range, 0.0001, 0.1, true},
        {"momentum", GeneKind::real_range, 0, 1, false},
        {"batch_size", GeneKind::int_range, 1, 128, false},
        {"l2_decay", GeneKind::fixed_real, 0.01, 0.01, false},
        {"experience_size", GeneKind::int_range, 3000, 10000, false},
        {"start_learn_threshold", GeneKind::fixed_int, 500, 500, false},
        {"gamma", GeneKind::real_range, 0.8, 1, false},
        {"learning_steps_total", GeneKind::int_range, 10000, 100000, false},  // hi: ti
        {"learning_steps_burnin", GeneKind::int_range, 1000, 50000, false},   // hi: ti/2
        {"epsilon_min", GeneKind::real_range, 0, 1, false},
        {"epsilon_test_time", GeneKind::real_range, 0, 1, false},
        {"number_of_layers", GeneKind::int_range, 4, 7, false},
    };
    return s;
  }

  const std::vector<GeneDef>& genes() const { return genes_; }

  const GeneDef* find(const std::string& name) const {
    for (const auto& g : genes_)
      if (g.name == name) return &g;
    return nullptr;
  }

  /// Override one gene's bounds (lo == hi turns it into a fixed gene).
  void set_bounds(const std::string& name, double lo, double hi) {
    for (auto& g : genes_) {
      if (g.name != name) continue;
      if (lo > hi) throw ConfigError("space: " + name + ": lower bound above upper bound");
      g.lo = lo;
      g.hi = hi;
      if (lo == hi)
        g.kind = (g.kind == GeneKind::real_range || g.kind == GeneKind::fixed_real)
                     ? GeneKind::fixed_real
                     : GeneKind::fixed_int;
      else
        g.kind = (g.kind == GeneKind::real_range || g.kind == GeneKind::fixed_real)
                     ? GeneKind::real_range
                     : GeneKind::int_range;
      return;
    }
    throw ConfigError("space: unknown hyperparameter '" + name + "'");
  }

  struct Bounds {
    double lo, hi;
  };

  /// Effective bounds of gene i given the dependent genes already present in
  /// cfg. Degenerate overrides (upper below the static lower bound) collapse
  /// the lower bound instead of inverting the interval.
  Bounds effective_bounds(int i, const HyperConfig& cfg) const {
    const GeneDef& g = genes_[static_cast<size_t>(i)];
    double lo = g.lo, hi = g.hi;
    if (i == kGeneTotal) hi = std::min(hi, double(cfg.train_iterations));
    if (i == kGeneBurnin)
      hi = std::min({hi, std::floor(double(cfg.train_iterations) / 2.0),
                     double(cfg.learning_steps_total)});
    lo = std::min(lo, hi);
    return {lo, hi};
  }

  HyperConfig sample(Rng& rng) const {
    HyperConfig cfg;
    const auto& acc = detail::gene_accessors();
    for (size_t i = 0; i < genes_.size(); ++i) {
      const GeneDef& g = genes_[i];
      if (!g.is_free()) {
        acc[i].set(cfg, g.lo);
        continue;
      }
      const Bounds b = effective_bounds(static_cast<int>(i), cfg);
      acc[i].set(cfg, draw(g, b, rng));
    }
    return cfg;
  }

  /// Uniform crossover: per free gene the child takes b's value with
  /// probability p_cross, else a's; dependent bounds are restored by clamping.
  HyperConfig crossover(const HyperConfig& a, const HyperConfig& b, Rng& rng,
                        double p_cross) const {
    HyperConfig child = a;
    const auto& acc = detail::gene_accessors();
    for (size_t i = 0; i < genes_.size(); ++i) {
      if (!genes_[i].is_free()) continue;
      if (rng.bernoulli(p_cross)) acc[i].set(child, acc[i].get(b));
    }
    clamp_dependents(child);
    return child;
  }

  /// Per free gene with probability p_mut: resample uniformly on its scale.
  HyperConfig mutate(const HyperConfig& lambda, Rng& rng, double p_mut) const {
    HyperConfig out = lambda;
    const auto& acc = detail::gene_accessors();
    for (size_t i = 0; i < genes_.size(); ++i) {
      const GeneDef& g = genes_[i];
      if (!g.is_free()) continue;
      if (!rng.bernoulli(p_mut)) continue;
      const Bounds b = effective_bounds(static_cast<int>(i), out);
      acc[i].set(out, draw(g, b, rng));
    }
    clamp_dependents(out);
    return out;
  }

  void clamp_dependents(HyperConfig& cfg) const {
    const auto& acc = detail::gene_accessors();
    for (int i : {kGeneTotal, kGeneBurnin}) {
      const Bounds b = effective_bounds(i, cfg);
      const double v = std::clamp(acc[static_cast<size_t>(i)].get(cfg), b.lo, b.hi);
      acc[static_cast<size_t>(i)].set(cfg, v);
    }
  }

  bool contains(const HyperConfig& cfg) const { return violation(cfg).empty(); }

  /// Empty string when cfg satisfies every interval and dependent bound.
  std::string violation(const HyperConfig& cfg) const {
    const auto& acc = detail::gene_accessors();
    for (size_t i = 0; i < genes_.size(); ++i) {
      const GeneDef& g = genes_[i];
      const Bounds b = effective_bounds(static_cast<int>(i), cfg);
      const double v = acc[i].get(cfg);
      if (v < b.lo || v > b.hi)
        return g.name + " = " + std::to_string(v) + " outside [" + std::to_string(b.lo) + ", " +
               std::to_string(b.hi) + "]";
    }
    return {};
  }

  void validate_config(const HyperConfig& cfg) const {
    std::string v = violation(cfg);
    if (!v.empty()) throw ConfigError("hyper: " + v);
  }

 private:
  static double draw(const GeneDef& g, const Bounds& b, Rng& rng) {
    if (g.kind == GeneKind::int_range)
      return static_cast<double>(rng.uniform_int(static_cast<int64_t>(b.lo),
                                                 static_cast<int64_t>(b.hi)));
    double v = (g.log_scale && b.lo > 0) ? std::exp(rng.uniform(std::log(b.lo), std::log(b.hi)))
                                         : rng.uniform(b.lo, b.hi);
    return std::clamp(v, b.lo, b.hi);  // guards the exp/log round trip
  }

  std::vector<GeneDef> genes_;
};

/// Cheap deterministic surrogate fitness: mean normalized gene position,
/// scaled to the mph range. Used by dry runs and search-machinery tests.
inline double stub_fitness(const HyperConfig& cfg, const SearchSpace& space) {
  const auto& acc = detail::gene_accessors();
  const auto& genes = space.genes();
  double sum = 0.0;
  int count = 0;
  for (size_t i = 0; i < genes.size(); ++i) {
    const GeneDef& g = genes[i];
    if (!g.is_free()) continue;
    double v = acc[i].get(cfg), lo = g.lo, hi = g.hi;
    if (g.log_scale && lo > 0) {
      v = std::log(v);
      lo = std::log(g.lo);
      hi = std::log(g.hi);
    }
    sum += hi > lo ? (v - lo) / (hi - lo) : 0.0;
    ++count;
  }
  return count ? 80.0 * sum / count : 0.0;
}

struct Scored {
  HyperConfig config;
  double fitness = 0.0;  // mph
  int sample_index = 0;  // stable tie-break: earlier sample first
};

using FitnessFn = std::function<double(const HyperConfig&)>;

inline std::vector<Scored> rank_descending(std::vector<Scored> pop) {
  std::stable_sort(pop.begin(), pop.end(),
                   [](const Scored& a, const Scored& b) { return a.fitness > b.fitness; });
  return pop;
}

/// Sample k configurations, score each, and return them ranked best-first.
inline std::vector<Scored> random_search(const SearchSpace& space, int k, uint64_t seed,
                                         const FitnessFn& fitness, int jobs = 1) {
  if (k < 1) throw ConfigError("random_search: k must be >= 1");
  Rng rng(derive_seed(seed, 0x5a3b1e));
  std::vector<Scored> pop(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    pop[static_cast<size_t>(i)].config = space.sample(rng);
    pop[static_cast<size_t>(i)].sample_index = i;
  }
  parallel_for(pop.size(), jobs,
               [&](size_t i) { pop[i].fitness = fitness(pop[i].config); });
  return rank_descending(std::move(pop));
}

inline std::vector<Scored> select_top(const std::vector<Scored>& ranked, int n) {
  if (n < 0 || static_cast<size_t>(n) > ranked.size())
    throw ConfigError("select_top: n exceeds population size");
  return {ranked.begin(), ranked.begin() + n};
}

struct EAConfig {
  int mu = 5;
  double p_cross = 0.3;
  double p_mut = 0.1;
  int generations = 6;

  void validate() const {
    if (mu < 2) throw ConfigError("ea: mu must be >= 2");
    if (p_cross < 0 || p_cross > 1) throw ConfigError("ea: p_cross in [0,1]");
    if (p_mut < 0 || p_mut > 1) throw ConfigError("ea: p_mut in [0,1]");
    if (generations < 0) throw ConfigError("ea: generations must be >= 0");
  }
};

struct IterationStats {
  std::vector<Scored> population;
  double min = 0.0, mean = 0.0, max = 0.0;
};

inline IterationStats make_stats(std::vector<Scored> pop) {
  IterationStats s;
  s.population = std::move(pop);
  if (s.population.empty()) return s;
  s.min = s.population.front().fitness;
  s.max = s.population.front().fitness;
  double sum = 0.0;
  for (const Scored& e : s.population) {
    s.min = std::min(s.min, e.fitness);
    s.max = std::max(s.max, e.fitness);
    sum += e.fitness;
  }
  s.mean = sum / static_cast<double>(s.population.size());
  return s;
}

struct SearchHistory {
  // entry 0 is the initial population, then one entry per generation
  std::vector<IterationStats> iterations;
  bool aborted = false;
  std::string error;

  double best_fitness() const {
    double best = 0.0;
    for (const auto& it : iterations) best = std::max(best, it.max);
    return best;
  }
};

/// Elitist evolutionary search: the single best parent survives unchanged
/// (with its recorded fitness); the remaining mu-1 slots are refilled by
/// fitness-proportional parent selection, uniform crossover and mutation.
inline SearchHistory evolve(const SearchSpace& space, std::vector<Scored> population,
                            const EAConfig& ea, const FitnessFn& fitness, uint64_t seed,
                            int jobs = 1) {
  ea.validate();
  if (static_cast<int>(population.size()) != ea.mu)
    throw ConfigError("evolve: initial population size must equal mu");
  Rng rng(derive_seed(seed, 0xe70f));
  SearchHistory history;
  history.iterations.push_back(make_stats(population));
  double best_so_far = history.iterations.front().max;

  auto pick_parent = [&](const std::vector<Scored>& pop) -> const Scored& {
    double total = 0.0;
    for (const Scored& e : pop) total += std::max(0.0, e.fitness);
    if (total <= 0.0)
      return pop[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(pop.size()) - 1))];
    double u = rng.uniform() * total;
    for (const Scored& e : pop) {
      u -= std::max(0.0, e.fitness);
      if (u < 0.0) return e;
    }
    return pop.back();
  };

  for (int gen = 0; gen < ea.generations; ++gen) {
    size_t best = 0;
    for (size_t i = 1; i < population.size(); ++i)
      if (population[i].fitness > population[best].fitness) best = i;

    std::vector<Scored> next;
    next.reserve(population.size());
    next.push_back(population[best]);  // elite, fitness carried over
    for (int c = 1; c < ea.mu; ++c) {
      const Scored& pa = pick_parent(population);
      const Scored& pb = pick_parent(population);
      Scored child;
      child.config = space.mutate(space.crossover(pa.config, pb.config, rng, ea.p_cross), rng,
                                  ea.p_mut);
      child.sample_index = c;
      next.push_back(std::move(child));
    }
    try {
      parallel_for(next.size() - 1, jobs,
                   [&](size_t i) { next[i + 1].fitness = fitness(next[i + 1].config); });
    } catch (const std::exception& e) {
      history.aborted = true;
      history.error = e.what();
      return history;
    }
    population = std::move(next);
    IterationStats stats = make_stats(population);
    if (stats.max + 1e-12 < best_so_far)
      throw std::logic_error("elitism violated: best fitness decreased");
    best_so_far = std::max(best_so_far, stats.max);
    history.iterations.push_back(std::move(stats));
  }
  return history;
}

}  // namespace traffic
