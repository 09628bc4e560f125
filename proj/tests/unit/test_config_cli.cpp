#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <string>

#include "traffic/cli.hpp"
#include "traffic/expconfig.hpp"
#include "traffic/model_io.hpp"
#include "traffic/util.hpp"

using namespace traffic;
namespace fs = std::filesystem;

namespace {

const std::string kBaseConfig = R"(# sample experiment
[sim]
lanes = 7
road_patches = 200
n_vehicles = 8

[space]
train_iterations = 300..600
learning_steps_total = 100..600
learning_steps_burnin = 20..150
start_learn_threshold = 32
experience_size = 256..512
num_neurons = 4..8
patches_ahead = 3..6
patches_behind = 1..3
lanes_side = 3
batch_size = 4..16
epsilon_min = 0.1..0.4
epsilon_test_time = 0.05..0.2

[search]
random_samples = 8
top = 4

[ea]
mu = 4
p_cross = 0.3
p_mut = 0.1
generations = 3

[strategy]
kind = transfer
n_agents = 1,2
reward_mode = joint

[eval]
folds = 2
eval_ticks = 60
write_logs = true

[seeds]
master = 11

[out]
dir = out
)";

const std::string kHyperSection = R"([hyper]
lanes_side = 3
patches_ahead = 4
patches_behind = 2
train_iterations = 300        # desk scale
temporal_window = 0
num_neurons = 6
learning_rate = 0.0005
momentum = 0.5
batch_size = 8
l2_decay = 0.01
experience_size = 512
start_learn_threshold = 32
gamma = 0.9
learning_steps_total = 300
learning_steps_burnin = 20
epsilon_min = 0.2
epsilon_test_time = 0.1
number_of_layers = 4
)";

const std::string kSampleConfig = kBaseConfig + kHyperSection;

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("trafficlab_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig sample_config() { return ExperimentConfig::from_text(kSampleConfig, "sample.cfg"); }

size_t count_lines(const std::string& text) {
  size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("the sample experiment file parses into every section") {
  const ExperimentConfig cfg = sample_config();
  CHECK(cfg.sim.road_patches == 200);
  CHECK(cfg.sim.n_vehicles == 8);
  CHECK(cfg.has_hyper);
  CHECK(cfg.hyper.train_iterations == 300);
  CHECK(cfg.hyper.learning_rate == 0.0005);
  CHECK(cfg.search_samples == 8);
  CHECK(cfg.ea.mu == 4);
  CHECK(cfg.strategy == StrategyKind::transfer);
  CHECK(cfg.n_agents == std::vector<int>{1, 2});
  CHECK(cfg.folds == 2);
  CHECK(cfg.master_seed == 11);
  CHECK(cfg.out_dir == "out");
}

TEST_CASE("agent lists accept ranges and enumerations") {
  ExperimentConfig cfg = sample_config();
  CHECK(detail::parse_int_list("1..11", "t", 1).size() == 11);
  CHECK(detail::parse_int_list("1,3,6,9,11", "t", 1) == std::vector<int>{1, 3, 6, 9, 11});
  CHECK(detail::parse_int_list("2..3,7", "t", 1) == std::vector<int>{2, 3, 7});
  CHECK_THROWS_AS(detail::parse_int_list("5..2", "t", 1), ParseError);
  CHECK_THROWS_AS(detail::parse_int_list("a,b", "t", 1), ParseError);
}

TEST_CASE("malformed experiment files report file and line") {
  auto expect_line = [](const std::string& text, size_t line) {
    try {
      ExperimentConfig::from_text(text, "bad.cfg");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.file == "bad.cfg");
      CHECK(e.line == line);
    }
  };
  expect_line("[sim\nlanes = 7\n", 1);
  expect_line("lanes = 7\n", 1);  // key outside any section
  expect_line("[sim]\nlanes 7\n", 2);
  expect_line("[sim]\nlanes = seven\n", 2);
  expect_line("[sim]\nlanes = 7\nlanes = 8\n", 3);
  expect_line("[sim]\nbogus_key = 1\n", 2);
}

TEST_CASE("unknown sections and invalid values are configuration errors") {
  CHECK_THROWS_AS(ExperimentConfig::from_text("[nope]\nx = 1\n", "c"), ParseError);
  // n_agents outside [1, 11]
  std::string bad = kSampleConfig;
  bad.replace(bad.find("n_agents = 1,2"), 14, "n_agents = 12 ");
  CHECK_THROWS_AS(ExperimentConfig::from_text(bad, "c"), ConfigError);
  // mu must match top
  std::string mismatched = kSampleConfig;
  mismatched.replace(mismatched.find("mu = 4"), 6, "mu = 5");
  CHECK_THROWS_AS(ExperimentConfig::from_text(mismatched, "c"), ConfigError);
  // hyper outside the configured space
  std::string out_of_space = kSampleConfig;
  out_of_space.replace(out_of_space.find("num_neurons = 6"), 15, "num_neurons = 9");
  CHECK_THROWS_AS(ExperimentConfig::from_text(out_of_space, "c"), ConfigError);
}

TEST_CASE("hyper fragments round-trip exactly") {
  const SearchSpace space = SearchSpace::defaults();
  Rng rng(77);
  for (int i = 0; i < 20; ++i) {
    const HyperConfig h = space.sample(rng);
    // fragments from the default space parse standalone
    const ExperimentConfig cfg = ExperimentConfig::from_text(hyper_fragment(h), "frag.cfg");
    REQUIRE(cfg.has_hyper);
    REQUIRE(cfg.hyper == h);
  }
}

TEST_CASE("dry-run search writes deterministic, elitist artifacts") {
  const ExperimentConfig cfg = sample_config();
  cli::Options opts;
  opts.dry_run = true;

  const fs::path out_a = fresh_dir("search_a");
  opts.out_dir = out_a.string();
  const auto art_a = cli::cmd_search(cfg, opts);
  CHECK(art_a.evaluations <= 8u + 3u * 3u);

  const fs::path out_b = fresh_dir("search_b");
  opts.out_dir = out_b.string();
  cli::cmd_search(cfg, opts);

  for (const char* name : {"search_log.csv", "fig1_search.csv", "best_lambda.cfg"}) {
    const std::string a = read_file(out_a / name);
    const std::string b = read_file(out_b / name);
    REQUIRE(a == b);
  }

  // 8 sampled + 4 selected + 4 per generation over 3 generations, plus header
  const std::string log = read_file(out_a / "search_log.csv");
  CHECK(count_lines(log) == 1 + 8 + 4 + 3 * 4);
  const std::string fig1 = read_file(out_a / "fig1_search.csv");
  CHECK(count_lines(fig1) == 1 + 1 + 1 + 3);

  // max column never decreases from the selection iteration onward
  double prev_max = -1.0;
  size_t pos = fig1.find('\n') + 1;
  int iteration = 0;
  while (pos < fig1.size()) {
    size_t eol = fig1.find('\n', pos);
    const auto fields = split(fig1.substr(pos, eol - pos), ',');
    REQUIRE(fields.size() == 4);
    const double max = *parse_double(fields[3]);
    if (iteration >= 1) REQUIRE(max >= prev_max);
    prev_max = max;
    pos = eol + 1;
    ++iteration;
  }

  // the emitted best configuration must parse (against the same space
  // overrides) and lie inside that space
  const std::string frag = read_file(out_a / "best_lambda.cfg");
  const ExperimentConfig best = ExperimentConfig::from_text(kBaseConfig + frag, "best_lambda.cfg");
  CHECK(best.has_hyper);
  CHECK(sample_config().space.contains(best.hyper));
}

TEST_CASE("train, evaluate and analyze chain end to end") {
  ExperimentConfig cfg = sample_config();
  const fs::path out = fresh_dir("chain");
  cfg.out_dir = out.string();
  cli::Options opts;

  const auto models = cli::cmd_train(cfg, opts);
  REQUIRE(models.size() == 1);  // transfer trains exactly one core
  CHECK(fs::exists(models[0]));
  CHECK(fs::exists(cli::detail::curve_path(models[0])));

  // reloading reproduces the q-values of an identically seeded retraining
  const LoadedModel loaded = load_model(models[0]);
  const TrainResult retrained =
      train_core(cfg.hyper, cli::detail::train_seed(cfg, StrategyKind::transfer, 1), cfg.sim);
  REQUIRE(loaded.net.same_weights(retrained.net));

  const auto eval = cli::cmd_evaluate(cfg, opts);
  REQUIRE(eval.reports.size() == 2);  // n_agents = 1,2
  const std::string fig5 = read_file(out / "fig5_perf.csv");
  CHECK(count_lines(fig5) == 1 + 2 * 2);  // header + arrangements x folds
  CHECK(fig5.rfind("strategy,n_agents,fold,avg_speed_mph,n_cp\n", 0) == 0);
  CHECK(fs::exists(out / "summary.json"));
  CHECK(fs::exists(out / "logs/transfer_n1_fold0.csv"));
  CHECK(fs::exists(out / "logs/transfer_n2_fold1.csv"));

  // evaluate twice: identical bytes
  const auto fig5_again = [&] {
    cli::cmd_evaluate(cfg, opts);
    return read_file(out / "fig5_perf.csv");
  }();
  CHECK(fig5 == fig5_again);

  cli::cmd_analyze(cfg, opts);
  const std::string fig6 = read_file(out / "fig6_congestion.csv");
  CHECK(fig6.rfind("strategy,n_agents,n_cp,n_full_block,n_coop\n", 0) == 0);
  CHECK(count_lines(fig6) == 1 + 2);
  const std::string fig7 = read_file(out / "fig7_hist.csv");
  CHECK(count_lines(fig7) == 1 + 2 * 16);
  const std::string regression = read_file(out / "regression.csv");
  CHECK(count_lines(regression) == 2);  // header + transfer row
  CHECK(fs::exists(out / "analysis/events_transfer_n1_fold0.csv"));
}

TEST_CASE("run-all produces byte-identical artifact trees on repeat runs") {
  const ExperimentConfig cfg = sample_config();
  auto run_into = [&](const std::string& tag) {
    const fs::path out = fresh_dir(tag);
    cli::Options opts;
    opts.out_dir = out.string();
    cli::cmd_run_all(cfg, opts);
    return out;
  };
  const fs::path a = run_into("runall_a");
  const fs::path b = run_into("runall_b");

  size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    REQUIRE(fs::exists(b / rel));
    REQUIRE(read_file(entry.path()) == read_file(b / rel));
    ++compared;
  }
  CHECK(compared >= 10);  // search, models, figures, logs, analysis
}

TEST_CASE("evaluate rejects models with mismatched observation geometry") {
  ExperimentConfig cfg = sample_config();
  const fs::path out = fresh_dir("mismatch");
  cfg.out_dir = out.string();
  cli::Options opts;
  cli::cmd_train(cfg, opts);

  ExperimentConfig wider = cfg;
  wider.hyper.patches_ahead = 6;  // still inside the space, different state size
  CHECK_THROWS_AS(cli::cmd_evaluate(wider, opts), ModelCompatError);
}

TEST_CASE("analyze on an empty output tree writes zeroed reports") {
  ExperimentConfig cfg = sample_config();
  const fs::path out = fresh_dir("empty_analysis");
  cfg.out_dir = out.string();
  cli::cmd_analyze(cfg, cli::Options{});
  CHECK(count_lines(read_file(out / "fig6_congestion.csv")) == 1);
  CHECK(count_lines(read_file(out / "fig7_hist.csv")) == 1);
  CHECK(count_lines(read_file(out / "regression.csv")) == 1);
}

TEST_CASE("multiagent training writes one model per agent count") {
  ExperimentConfig cfg = sample_config();
  cfg.strategy = StrategyKind::multiagent;
  const fs::path out = fresh_dir("multi");
  cfg.out_dir = out.string();
  cli::Options opts;
  const auto models = cli::cmd_train(cfg, opts);
  REQUIRE(models.size() == 2);
  CHECK(fs::exists(out / "models/shared_n1.model"));
  CHECK(fs::exists(out / "models/shared_n2.model"));

  const auto eval = cli::cmd_evaluate(cfg, opts);
  REQUIRE(eval.reports.size() == 2);
  CHECK(fs::exists(out / "logs/multiagent_n2_fold0.csv"));
}
