// SPDX-License-Identifier: Apache-2.0
//
// fedentropy: run FedEntropy / FedAvg / FedProx simulations on synthetic
// non-IID data and write per-round and summary CSVs.
//
//   fedentropy run --config exp.cfg --out-dir out/ --target-acc 0.6
//   fedentropy partition-stats --set partition=dirichlet --out-dir out/
//   fedentropy selftest

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "fedentropy/datagen.hpp"
#include "fedentropy/experiment.hpp"
#include "fedentropy/testing/oracles.hpp"

namespace fe = fedentropy;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string seed;
  std::string mode;
  std::string out_dir = ".";
  std::string target_acc;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "key = value config file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "seed, or comma-separated seed list (overrides config)");
  cmd->add_option("--mode", opts.mode,
                  "fedentropy | fedavg_random | fedprox_random | fedprox_fedentropy "
                  "(comma-separated list allowed)");
  cmd->add_option("--out-dir", opts.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--target-acc", opts.target_acc, "accuracy target for rounds-to-target");
  cmd->add_option("--set", opts.overrides, "extra config override, key=value (repeatable)");
}

// Config file first, then --set entries, then the dedicated flags.
fe::ExperimentConfig resolve_config(const CommonOptions& opts) {
  fe::ExperimentConfig cfg =
      opts.config_path.empty() ? fe::ExperimentConfig{} : fe::load_config(opts.config_path);
  for (const std::string& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    }
    fe::apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!opts.seed.empty()) fe::apply_config_value(cfg, "seeds", opts.seed);
  if (!opts.mode.empty()) fe::apply_config_value(cfg, "modes", opts.mode);
  if (!opts.target_acc.empty()) fe::apply_config_value(cfg, "target_acc", opts.target_acc);
  cfg.validate();
  return cfg;
}

int run_command(const CommonOptions& opts) {
  const fe::ExperimentConfig cfg = resolve_config(opts);
  const fe::ExperimentResult result = fe::run_experiment(cfg);
  const std::filesystem::path out(opts.out_dir);
  fe::write_round_csv(out / "rounds.csv", result.runs);
  fe::write_summary(out / "summary.csv", result.summaries);
  fe::write_summary(std::cout, result.summaries);
  std::cerr << "wrote " << (out / "rounds.csv").string() << " and "
            << (out / "summary.csv").string() << '\n';
  return 0;
}

int partition_stats_command(const CommonOptions& opts) {
  const fe::ExperimentConfig cfg = resolve_config(opts);
  const std::uint64_t seed = cfg.seeds.front();
  const fe::SplitDataset data = fe::make_blobs(cfg.blobs, seed);
  const fe::Partition partition = fe::make_partition(
      data.train, fe::PartitionSpec{cfg.partition, cfg.beta, cfg.selection.device_count, seed});
  const fe::ClassHistogram table = fe::partition_stats(partition, data.train);

  const std::filesystem::path path = std::filesystem::path(opts.out_dir) / "partition_stats.csv";
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  fe::write_partition_stats_csv(file, table);
  file.flush();
  if (!file) throw std::runtime_error("failed writing '" + path.string() + "'");
  std::cerr << "wrote " << path.string() << '\n';
  return 0;
}

int selftest_command(std::size_t instances, std::size_t gradient_instances, std::uint64_t seed) {
  const fe::testing::CheckReport checks[] = {
      fe::testing::check_judgment_oracle(instances, seed),
      fe::testing::check_gradients(gradient_instances, seed),
  };
  bool ok = true;
  for (const auto& c : checks) {
    std::printf("[%s] %s: %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
    ok = ok && c.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FedEntropy federated-learning simulator"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  CLI::App* run = app.add_subcommand("run", "run every (mode, seed) pair and write CSVs");
  add_common(run, run_opts);

  CommonOptions stats_opts;
  CLI::App* stats =
      app.add_subcommand("partition-stats", "write the per-device class histogram CSV");
  add_common(stats, stats_opts);

  std::size_t instances = 1000;
  std::size_t gradient_instances = 20;
  std::uint64_t selftest_seed = 7;
  CLI::App* selftest =
      app.add_subcommand("selftest", "oracle equivalence and gradient checks");
  selftest->add_option("--instances", instances, "random judgment instances")
      ->capture_default_str();
  selftest->add_option("--gradient-instances", gradient_instances, "random gradient checks")
      ->capture_default_str();
  selftest->add_option("--seed", selftest_seed, "generator seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return run_command(run_opts);
    if (*stats) return partition_stats_command(stats_opts);
    if (*selftest) return selftest_command(instances, gradient_instances, selftest_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
