#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <vector>

#include "traffic/fitness.hpp"
#include "traffic/hyperopt.hpp"

using namespace traffic;

namespace {

void check_in_space(const SearchSpace& space, const HyperConfig& cfg) {
  INFO(space.violation(cfg));
  REQUIRE(space.contains(cfg));
}

FitnessFn stub_fn(const SearchSpace& space) {
  return [&space](const HyperConfig& cfg) { return stub_fitness(cfg, space); };
}

}  // namespace

TEST_CASE("sampled configurations respect every interval and dependency") {
  const SearchSpace space = SearchSpace::defaults();
  Rng rng(31);
  for (int i = 0; i < 1000; ++i) {
    const HyperConfig cfg = space.sample(rng);
    check_in_space(space, cfg);
    CHECK(cfg.temporal_window == 0);
    CHECK(cfg.l2_decay == 0.01);
    CHECK(cfg.start_learn_threshold == 500);
    CHECK(cfg.learning_steps_burnin <= cfg.train_iterations / 2);
    CHECK(cfg.learning_steps_burnin >= 1000);
    CHECK(cfg.learning_steps_total >= 10000);
    CHECK(cfg.learning_steps_total <= cfg.train_iterations);
    CHECK(cfg.learning_steps_burnin <= cfg.learning_steps_total);
  }
}

TEST_CASE("the reference configuration lies inside the default space") {
  check_in_space(SearchSpace::defaults(), HyperConfig::reference_optimum());
}

TEST_CASE("crossover endpoints and gene membership") {
  const SearchSpace space = SearchSpace::defaults();
  Rng rng(32);
  const HyperConfig a = space.sample(rng);
  const HyperConfig b = space.sample(rng);

  Rng r0(1);
  CHECK(space.crossover(a, b, r0, 0.0) == a);

  Rng r1(1);
  const HyperConfig all_b = space.crossover(a, b, r1, 1.0);
  CHECK(all_b.lanes_side == b.lanes_side);
  CHECK(all_b.learning_rate == b.learning_rate);
  CHECK(all_b.number_of_layers == b.number_of_layers);

  Rng rmid(2);
  for (int trial = 0; trial < 200; ++trial) {
    const HyperConfig child = space.crossover(a, b, rmid, 0.4);
    check_in_space(space, child);
    CHECK((child.momentum == a.momentum || child.momentum == b.momentum));
    CHECK((child.num_neurons == a.num_neurons || child.num_neurons == b.num_neurons));
    // dependent genes may be clamped, everything else is one parent's value
    CHECK((child.patches_ahead == a.patches_ahead || child.patches_ahead == b.patches_ahead));
  }
}

TEST_CASE("mutation endpoints and bound preservation") {
  const SearchSpace space = SearchSpace::defaults();
  Rng rng(33);
  const HyperConfig base = space.sample(rng);

  Rng r0(4);
  CHECK(space.mutate(base, r0, 0.0) == base);

  Rng rmid(5);
  for (int trial = 0; trial < 500; ++trial)
    check_in_space(space, space.mutate(base, rmid, 0.3));
}

TEST_CASE("full mutation replays the sampling draw sequence") {
  const SearchSpace space = SearchSpace::defaults();
  Rng seeder(34);
  const HyperConfig base = space.sample(seeder);
  Rng r1(4242), r2(4242);
  const HyperConfig mutated = space.mutate(base, r1, 1.0);
  const HyperConfig sampled = space.sample(r2);
  CHECK(mutated == sampled);
}

TEST_CASE("random search ranks candidates like a brute-force sort") {
  const SearchSpace space = SearchSpace::defaults();
  const auto ranked = random_search(space, 15, 99, stub_fn(space));
  REQUIRE(ranked.size() == 15);
  for (size_t i = 0; i + 1 < ranked.size(); ++i) {
    REQUIRE(ranked[i].fitness >= ranked[i + 1].fitness);
    if (ranked[i].fitness == ranked[i + 1].fitness)
      CHECK(ranked[i].sample_index < ranked[i + 1].sample_index);
  }
  // brute force: re-sort by (fitness desc, sample order) and compare
  std::vector<Scored> resorted = ranked;
  std::sort(resorted.begin(), resorted.end(), [](const Scored& x, const Scored& y) {
    if (x.fitness != y.fitness) return x.fitness > y.fitness;
    return x.sample_index < y.sample_index;
  });
  for (size_t i = 0; i < ranked.size(); ++i) {
    CHECK(ranked[i].config == resorted[i].config);
    CHECK(ranked[i].fitness == stub_fitness(ranked[i].config, space));
  }
}

TEST_CASE("random search is reproducible and parallel-stable") {
  const SearchSpace space = SearchSpace::defaults();
  const auto serial = random_search(space, 12, 5, stub_fn(space), 1);
  const auto parallel = random_search(space, 12, 5, stub_fn(space), 4);
  REQUIRE(serial.size() == parallel.size());
  for (size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].config == parallel[i].config);
    CHECK(serial[i].fitness == parallel[i].fitness);
  }
}

TEST_CASE("select_top takes a stable prefix") {
  const SearchSpace space = SearchSpace::defaults();
  const auto ranked = random_search(space, 15, 99, stub_fn(space));
  const auto top = select_top(ranked, 5);
  REQUIRE(top.size() == 5);
  for (size_t i = 0; i < top.size(); ++i) CHECK(top[i].config == ranked[i].config);
  CHECK(select_top(ranked, 15).size() == 15);
  CHECK_THROWS_AS(select_top(ranked, 16), ConfigError);
}

TEST_CASE("evolution is elitist and keeps the population size") {
  const SearchSpace space = SearchSpace::defaults();
  const auto top = select_top(random_search(space, 15, 7, stub_fn(space)), 5);
  EAConfig ea;
  const SearchHistory hist = evolve(space, top, ea, stub_fn(space), 7);
  REQUIRE(hist.iterations.size() == 7);  // initial population + 6 generations
  CHECK_FALSE(hist.aborted);
  double best = 0.0;
  for (const auto& it : hist.iterations) {
    CHECK(it.population.size() == 5);
    REQUIRE(it.max >= best);
    best = it.max;
    for (const Scored& s : it.population) check_in_space(space, s.config);
    CHECK(it.min <= it.mean);
    CHECK(it.mean <= it.max);
  }
}

TEST_CASE("zero generations return only the initial population") {
  const SearchSpace space = SearchSpace::defaults();
  const auto top = select_top(random_search(space, 8, 3, stub_fn(space)), 5);
  EAConfig ea;
  ea.generations = 0;
  const SearchHistory hist = evolve(space, top, ea, stub_fn(space), 3);
  REQUIRE(hist.iterations.size() == 1);
  CHECK(hist.iterations[0].max == top[0].fitness);
}

TEST_CASE("evolve validates the initial population size") {
  const SearchSpace space = SearchSpace::defaults();
  const auto top = select_top(random_search(space, 8, 3, stub_fn(space)), 4);
  CHECK_THROWS_AS(evolve(space, top, EAConfig{}, stub_fn(space), 3), ConfigError);
}

TEST_CASE("a throwing fitness aborts with partial history") {
  const SearchSpace space = SearchSpace::defaults();
  const auto top = select_top(random_search(space, 8, 3, stub_fn(space)), 5);
  std::atomic<int> calls{0};
  FitnessFn flaky = [&](const HyperConfig& cfg) {
    if (calls.fetch_add(1) >= 6) throw std::runtime_error("boom");
    return stub_fitness(cfg, space);
  };
  const SearchHistory hist = evolve(space, top, EAConfig{}, flaky, 3);
  CHECK(hist.aborted);
  CHECK(hist.error == "boom");
  CHECK(hist.iterations.size() >= 2);  // init + at least one finished generation
}

TEST_CASE("space overrides re-bound and fix genes") {
  SearchSpace space = SearchSpace::defaults();
  space.set_bounds("num_neurons", 4, 10);
  space.set_bounds("lanes_side", 3, 3);
  space.set_bounds("train_iterations", 300, 600);
  space.set_bounds("learning_steps_total", 100, 600);
  space.set_bounds("learning_steps_burnin", 50, 200);
  Rng rng(8);
  for (int i = 0; i < 300; ++i) {
    const HyperConfig cfg = space.sample(rng);
    CHECK(cfg.lanes_side == 3);
    CHECK(cfg.num_neurons >= 4);
    CHECK(cfg.num_neurons <= 10);
    CHECK(cfg.train_iterations <= 600);
    CHECK(cfg.learning_steps_total <= cfg.train_iterations);
    CHECK(cfg.learning_steps_burnin <= cfg.train_iterations / 2);
    check_in_space(space, cfg);
  }
  CHECK_THROWS_AS(space.set_bounds("nope", 0, 1), ConfigError);
  CHECK_THROWS_AS(space.set_bounds("momentum", 0.9, 0.1), ConfigError);
}

TEST_CASE("fitness cache hits exact configuration and seed keys") {
  FitnessCache cache;
  const HyperConfig a = HyperConfig::reference_optimum();
  HyperConfig b = a;
  b.learning_rate = 0.0002;
  cache.store(a, 1, 42.0);
  double out = 0.0;
  CHECK(cache.lookup(a, 1, out));
  CHECK(out == 42.0);
  CHECK_FALSE(cache.lookup(a, 2, out));
  CHECK_FALSE(cache.lookup(b, 1, out));
  CHECK(cache.size() == 1);
}

TEST_CASE("real fitness evaluations are cached, bounded and repeatable") {
  HyperConfig h;
  h.lanes_side = 3;
  h.patches_ahead = 4;
  h.patches_behind = 2;
  h.train_iterations = 250;
  h.num_neurons = 5;
  h.learning_rate = 0.0005;
  h.momentum = 0.5;
  h.batch_size = 8;
  h.experience_size = 256;
  h.start_learn_threshold = 64;
  h.learning_steps_total = 250;
  h.learning_steps_burnin = 20;
  h.epsilon_min = 0.3;
  h.epsilon_test_time = 0.1;
  h.number_of_layers = 4;

  FitnessOptions opts;
  opts.base_sim.road_patches = 150;
  opts.base_sim.n_vehicles = 6;
  opts.folds = 2;
  opts.eval_ticks = 60;
  opts.seed = 5;

  FitnessCache cache;
  const double first = fitness_of(h, opts, &cache);
  const double cached = fitness_of(h, opts, &cache);
  const double fresh = fitness_of(h, opts, nullptr);
  CHECK(first == cached);
  CHECK(first == fresh);
  CHECK(cache.size() == 1);
  CHECK(first >= 0.0);
  CHECK(first <= 80.0);
}

TEST_CASE("diverged training scores zero fitness") {
  FitnessOptions opts;
  opts.trainer = [](const HyperConfig&, uint64_t, const SimConfig&) {
    TrainResult r;
    r.diverged = true;
    r.error = "synthetic divergence";
    return r;
  };
  std::atomic<uint64_t> diverged{0};
  FitnessCache cache;
  const double f = fitness_of(HyperConfig::reference_optimum(), opts, &cache, &diverged);
  CHECK(f == 0.0);
  CHECK(diverged.load() == 1);
  double cached = 0.0;
  CHECK(cache.lookup(HyperConfig::reference_optimum(), opts.seed, cached));
  CHECK(cached == 0.0);
}
