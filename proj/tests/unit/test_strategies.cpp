#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "traffic/model_io.hpp"
#include "traffic/strategies.hpp"

using namespace traffic;

namespace {

// configuration small enough for sub-second training inside unit tests
HyperConfig micro_lambda() {
  HyperConfig h;
  h.lanes_side = 3;
  h.patches_ahead = 4;
  h.patches_behind = 2;
  h.train_iterations = 300;
  h.temporal_window = 0;
  h.num_neurons = 6;
  h.learning_rate = 0.0005;
  h.momentum = 0.5;
  h.batch_size = 8;
  h.l2_decay = 0.01;
  h.experience_size = 512;
  h.start_learn_threshold = 32;
  h.gamma = 0.9;
  h.learning_steps_total = 300;
  h.learning_steps_burnin = 20;
  h.epsilon_min = 0.2;
  h.epsilon_test_time = 0.1;
  h.number_of_layers = 4;
  return h;
}

SimConfig small_sim() {
  SimConfig cfg;
  cfg.road_patches = 200;
  cfg.n_vehicles = 8;
  return cfg;
}

QNetwork no_action_policy_net() {
  QNetwork net = QNetwork::zeros(NetSpec{static_cast<int>(micro_lambda().state_dim()), 0, 0, 5});
  net.layers_mut()[0].b[static_cast<size_t>(Action::no_action)] = 1.0;
  return net;
}

}  // namespace

TEST_CASE("joint reward is the normalized mean trained-agent speed") {
  SimConfig cfg;
  cfg.n_vehicles = 2;
  cfg.rng_seed = 3;
  ObservationSpec ospec{1, 2, 1, 0};

  SimTrafficEnv joint(cfg, ospec, 2, RewardMode::joint);
  joint.reset(3);
  joint.world_mut().teleport(0, 1, 20.0);
  joint.world_mut().teleport(1, 5, 120.0);
  joint.world_mut().set_speed(0, 40.0);
  joint.world_mut().set_speed(1, 80.0);
  const auto r = joint.step({Action::no_action, Action::no_action});
  REQUIRE(r.size() == 2);
  CHECK(r[0] == 0.75);  // mean(40, 80) / 80
  CHECK(r[1] == 0.75);

  SimTrafficEnv indiv(cfg, ospec, 2, RewardMode::individual);
  indiv.reset(3);
  indiv.world_mut().teleport(0, 1, 20.0);
  indiv.world_mut().teleport(1, 5, 120.0);
  indiv.world_mut().set_speed(0, 40.0);
  indiv.world_mut().set_speed(1, 80.0);
  const auto ri = indiv.step({Action::no_action, Action::no_action});
  CHECK(ri[0] == 0.5);
  CHECK(ri[1] == 1.0);
}

TEST_CASE("multi-agent training stores one transition per agent and tick") {
  HyperConfig h = micro_lambda();
  h.train_iterations = 12;
  h.learning_steps_total = 12;
  h.learning_steps_burnin = 6;
  h.start_learn_threshold = 1000;  // no updates, just bookkeeping
  const TrainResult r = train_multiagent(h, 3, RewardMode::joint, 21, small_sim());
  CHECK(r.transitions_stored == 36);
  CHECK(r.updates == 0);
}

TEST_CASE("agent counts outside the supported range are rejected") {
  CHECK_THROWS_AS(train_multiagent(micro_lambda(), 0, RewardMode::joint, 1, small_sim()),
                  ConfigError);
  CHECK_THROWS_AS(train_multiagent(micro_lambda(), 12, RewardMode::joint, 1, small_sim()),
                  ConfigError);
  const QNetwork net = no_action_policy_net();
  CHECK_THROWS_AS(deploy_transfer(net, 0, micro_lambda().observation_spec(), 0.1), ConfigError);
  CHECK_THROWS_AS(deploy_transfer(net, 12, micro_lambda().observation_spec(), 0.1), ConfigError);
}

TEST_CASE("single-agent joint training equals core training weight for weight") {
  const HyperConfig h = micro_lambda();
  const TrainResult core = train_core(h, 4711, small_sim());
  const TrainResult joint = train_multiagent(h, 1, RewardMode::joint, 4711, small_sim());
  REQUIRE_FALSE(core.diverged);
  REQUIRE_FALSE(joint.diverged);
  CHECK(core.net.same_weights(joint.net));
  CHECK(core.reward_curve == joint.reward_curve);
}

TEST_CASE("repeated core training is deterministic") {
  const HyperConfig h = micro_lambda();
  const TrainResult a = train_core(h, 99, small_sim());
  const TrainResult b = train_core(h, 99, small_sim());
  CHECK(a.net.same_weights(b.net));
  CHECK(serialize_model(a.net, 99) == serialize_model(b.net, 99));
}

TEST_CASE("deployed policies share the exact core weights") {
  const TrainResult core = train_core(micro_lambda(), 17, small_sim());
  const Policy policy = deploy_transfer(core.net, 5, micro_lambda().observation_spec(), 0.1);
  CHECK(policy.net == core.net);

  Rng rng(55);
  const int dim = micro_lambda().state_dim();
  for (int i = 0; i < 100; ++i) {
    std::vector<double> obs(static_cast<size_t>(dim));
    for (double& v : obs) v = rng.uniform(0.0, 1.0);
    REQUIRE(policy.net.forward(obs) == core.net.forward(obs));  // bit-exact
  }
}

TEST_CASE("an unobstructed cruiser holds its speed through every fold") {
  SimConfig cfg;
  cfg.n_vehicles = 1;
  cfg.init_speed_min = 80.0;
  cfg.init_speed_max = 80.0;
  Policy policy{no_action_policy_net(), micro_lambda().observation_spec(), 0.0};
  EvalOptions opts;
  opts.folds = 5;
  opts.eval_ticks = 50;
  opts.base_seed = 1;
  opts.base_sim = cfg;
  opts.count_patterns = true;
  const EvalReport report = evaluate_policy(policy, 1, opts);
  REQUIRE(report.fold_speeds.size() == 5);
  for (double v : report.fold_speeds) CHECK(v == 80.0);
  for (uint64_t n : report.fold_ncp) CHECK(n == 0);
  CHECK(report.mean == 80.0);
  CHECK(report.spread == 0.0);
}

TEST_CASE("evaluation reports are deterministic and parallel-stable") {
  const TrainResult core = train_core(micro_lambda(), 23, small_sim());
  const Policy policy = deploy_transfer(core.net, 3, micro_lambda().observation_spec(), 0.1);
  EvalOptions opts;
  opts.folds = 3;
  opts.eval_ticks = 120;
  opts.base_seed = 42;
  opts.base_sim = small_sim();
  const EvalReport a = evaluate_policy(policy, 3, opts);
  const EvalReport b = evaluate_policy(policy, 3, opts);
  EvalOptions par = opts;
  par.jobs = 3;
  const EvalReport c = evaluate_policy(policy, 3, par);
  CHECK(a.fold_speeds == b.fold_speeds);
  CHECK(a.fold_ncp == b.fold_ncp);
  CHECK(a.fold_speeds == c.fold_speeds);
  CHECK(a.fold_ncp == c.fold_ncp);
  CHECK(a.spread == Catch::Approx(a.max - a.min));
  for (double v : a.fold_speeds) {
    CHECK(v >= 0.0);
    CHECK(v <= 80.0);
  }
}

TEST_CASE("the random baseline is reproducible and bounded") {
  EvalOptions opts;
  opts.folds = 3;
  opts.eval_ticks = 100;
  opts.base_seed = 9;
  opts.base_sim = small_sim();
  opts.count_patterns = false;
  const EvalReport a = evaluate_random_baseline(2, opts);
  const EvalReport b = evaluate_random_baseline(2, opts);
  CHECK(a.fold_speeds == b.fold_speeds);
  for (double v : a.fold_speeds) {
    CHECK(v > 0.0);
    CHECK(v < 80.0);
  }
}
