// trafficlab: experiment driver for the highway micro-traffic laboratory.
//
// Subcommands mirror the experiment pipeline: search (hyperparameter
// search), train, evaluate, analyze, and run-all for the whole chain.
// Exit codes: 0 ok, 2 configuration error, 3 runtime failure, 4 training
// divergence, 5 model/observation mismatch, 6 log parse error.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "traffic/traffic.hpp"

namespace {

struct Args {
  std::string config_path;
  traffic::cli::Options opts;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
  std::string strategy;
  std::string n_agents;
};

void add_common_flags(CLI::App* cmd, Args& args) {
  cmd->add_option("--config", args.config_path, "experiment configuration file")->required();
  cmd->add_option("--seed", args.seed, "override the master seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_option("--jobs", args.opts.jobs, "parallel workers for folds and candidates")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", args.out_dir, "override the output directory");
  cmd->add_flag("--dry-run", args.opts.dry_run, "use the stub fitness in the search");
}

traffic::ExperimentConfig load_config(Args& args) {
  if (args.seed_set) args.opts.seed = args.seed;
  if (!args.out_dir.empty()) args.opts.out_dir = args.out_dir;
  if (!args.strategy.empty()) args.opts.strategy = args.strategy;
  if (!args.n_agents.empty()) args.opts.n_agents = args.n_agents;
  try {
    return traffic::ExperimentConfig::load(args.config_path);
  } catch (const traffic::ParseError& e) {
    // a malformed experiment file is a configuration error, not a log error
    throw traffic::ConfigError(e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixed-intelligence highway traffic laboratory"};
  app.require_subcommand(1);

  Args args;
  CLI::App* search = app.add_subcommand("search", "random search + evolutionary refinement");
  CLI::App* train = app.add_subcommand("train", "train the configured strategy");
  CLI::App* evaluate = app.add_subcommand("evaluate", "folded evaluation of trained models");
  CLI::App* analyze = app.add_subcommand("analyze", "congestion patterns and regression slopes");
  CLI::App* run_all = app.add_subcommand("run-all", "search, train, evaluate, analyze");
  for (CLI::App* cmd : {search, train, evaluate, analyze, run_all}) add_common_flags(cmd, args);
  for (CLI::App* cmd : {train, evaluate, run_all}) {
    cmd->add_option("--strategy", args.strategy, "transfer or multiagent");
    cmd->add_option("--n-agents", args.n_agents, "agent counts, e.g. 1..11 or 1,3,6");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    const traffic::ExperimentConfig cfg = load_config(args);
    if (search->parsed()) {
      const auto art = traffic::cli::cmd_search(cfg, args.opts);
      std::printf("search: best fitness %.4f mph over %llu evaluations\n", art.best_fitness,
                  static_cast<unsigned long long>(art.evaluations));
    } else if (train->parsed()) {
      for (const std::string& model : traffic::cli::cmd_train(cfg, args.opts))
        std::printf("train: wrote %s\n", model.c_str());
    } else if (evaluate->parsed()) {
      const auto art = traffic::cli::cmd_evaluate(cfg, args.opts);
      for (const auto& report : art.reports)
        std::printf("evaluate: n_agents=%d mean=%.4f mph spread=%.4f mph\n", report.n_agents,
                    report.mean, report.spread);
    } else if (analyze->parsed()) {
      traffic::cli::cmd_analyze(cfg, args.opts);
      std::printf("analyze: reports written\n");
    } else if (run_all->parsed()) {
      traffic::cli::cmd_run_all(cfg, args.opts);
      std::printf("run-all: pipeline complete\n");
    }
  } catch (const traffic::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 6;
  } catch (const traffic::ModelCompatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 5;
  } catch (const traffic::DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const traffic::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
