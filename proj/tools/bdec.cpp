// Command-line driver: run experiments from presets or JSON configs.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "bdec/bdec.hpp"

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

bdec::ExperimentConfig load(const std::string& config_path, const std::string& preset_name) {
  if (!preset_name.empty()) return bdec::preset(preset_name);
  std::ifstream in(config_path);
  if (!in) throw bdec::ConfigError("config", "cannot open '" + config_path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw bdec::ConfigError("config", std::string("malformed JSON: ") + e.what());
  }
  return bdec::parse_config(doc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble Langevin sampling with birth-death and mode exploration"};
  app.require_subcommand(1);

  std::string config_path, preset_name, out_dir, algo;
  std::optional<std::uint64_t> seed;
  std::optional<int> reps, workers, snapshot_every;
  bool progress = false;
  bool parallel_replicates = false;

  auto* run = app.add_subcommand("run", "Run an experiment");
  auto* run_cfg = run->add_option("--config", config_path, "Experiment JSON file")->check(CLI::ExistingFile);
  auto* run_preset = run->add_option("--preset", preset_name, "Named preset");
  run_cfg->excludes(run_preset);
  run->add_option("--seed", seed, "Master seed (replicate r uses seed + r)");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--algo", algo, "Override algorithm: bdec, bdls, lec, ula");
  run->add_option("--reps", reps, "Number of replicates");
  run->add_option("--workers", workers, "Worker threads per replicate");
  run->add_option("--snapshot-every", snapshot_every, "Write ensemble snapshots every k iterations");
  run->add_flag("--progress", progress, "Print JSON progress lines to stderr");
  run->add_flag("--parallel-replicates", parallel_replicates, "Run replicates concurrently");

  auto* presets = app.add_subcommand("presets", "List presets");
  std::string show;
  presets->add_option("--show", show, "Print the full configuration of one preset");

  auto* val = app.add_subcommand("validate", "Check a configuration without running it");
  auto* val_cfg = val->add_option("--config", config_path, "Experiment JSON file")->check(CLI::ExistingFile);
  auto* val_preset = val->add_option("--preset", preset_name, "Named preset");
  val_cfg->excludes(val_preset);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (presets->parsed()) {
      if (show.empty()) {
        for (const auto& name : bdec::preset_names()) std::cout << name << '\n';
      } else {
        std::cout << bdec::to_json(bdec::preset(show)).dump(2) << '\n';
      }
      return 0;
    }

    if (config_path.empty() && preset_name.empty()) {
      std::cerr << "error: one of --config or --preset is required\n";
      return kUsageError;
    }
    bdec::ExperimentConfig config = load(config_path, preset_name);

    if (val->parsed()) {
      bdec::validate(config);
      std::cout << "ok\n";
      return 0;
    }

    if (seed) config.sampler.seed = *seed;
    if (!out_dir.empty()) config.output_dir = out_dir;
    if (!algo.empty()) {
      const auto parsed = bdec::parse_algorithm(algo);
      if (!parsed) throw bdec::ConfigError("algo", "unknown algorithm '" + algo + "'");
      config.sampler.algorithm = *parsed;
    }
    if (reps) config.replicates = *reps;
    if (workers) config.sampler.workers = *workers;
    if (snapshot_every) config.snapshot_every = *snapshot_every;
    if (parallel_replicates) config.parallel_replicates = true;

    bdec::RunOptions options;
    if (progress) options.progress = &std::cerr;
    bdec::run_experiment(config, options);
    std::cout << "wrote " << config.output_dir << '\n';
    return 0;
  } catch (const bdec::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}
