#include "mivi/experiments.hpp"
#include "mivi/trainer.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

int run_command(const std::string& config_path, const std::string& out_dir, int threads) {
  using mivi::LogLevel;
  try {
    const mivi::Config config = mivi::Config::load(config_path);
    const auto metrics = mivi::run_experiment(config, {out_dir, threads});
    if (metrics.contains("passed") && !metrics.at("passed").get<bool>()) {
      mivi::log_message(LogLevel::Error, "gradient check failed");
      return kExitFailure;
    }
    return 0;
  } catch (const mivi::ConfigError& e) {
    mivi::log_message(LogLevel::Error, std::string("config error: ") + e.what());
    return kExitConfig;
  } catch (const mivi::DivergenceError& e) {
    mivi::log_message(LogLevel::Error, "diverged at epoch " + std::to_string(e.epoch()) + ": " + e.what());
    return kExitDivergence;
  } catch (const std::exception& e) {
    mivi::log_message(LogLevel::Error, e.what());
    return kExitFailure;
  }
}

int gen_command(const std::string& experiment, std::uint64_t seed, const std::string& out) {
  try {
    mivi::generate_dataset(experiment, seed, out);
    return 0;
  } catch (const mivi::ConfigError& e) {
    mivi::log_message(mivi::LogLevel::Error, e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    mivi::log_message(mivi::LogLevel::Error, e.what());
    return kExitFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MCMC-interactive variational inference"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int threads = 1;
  auto* run = app.add_subcommand("run", "Run an experiment from a JSON config");
  run->add_option("config", config_path, "Config file")->required();
  run->add_option("--threads", threads, "Worker threads for particle simulation")->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "Output directory (overrides output_dir)");

  std::string experiment;
  std::uint64_t seed = 1;
  std::string out_file;
  auto* gen = app.add_subcommand("gen", "Write a synthetic dataset");
  gen->add_option("experiment", experiment, "nb or logistic")->required();
  gen->add_option("--seed", seed, "Random seed")->required();
  gen->add_option("--out", out_file, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }
  if (*run) return run_command(config_path, out_dir, threads);
  return gen_command(experiment, seed, out_file);
}
