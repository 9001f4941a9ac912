// lab: sweep runner, results tables, self-checks and standalone pretraining.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "lab/checkpoint.hpp"
#include "lab/checks.hpp"
#include "lab/config.hpp"
#include "lab/error.hpp"
#include "lab/harness.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeFailure = 2;

lab::ExperimentConfig configured(const std::string& path) {
  lab::ExperimentConfig cfg = lab::load_config(path);
  lab::apply_seed_override(cfg, std::getenv("LAB_SEED"));
  return cfg;
}

int cmd_run(const std::string& config_path, const std::string& out, std::size_t jobs, bool wall_time) {
  lab::ExperimentConfig cfg = configured(config_path);
  if (!out.empty()) cfg.output_dir = out;
  lab::RunOptions opts;
  opts.jobs = jobs;
  opts.record_wall_time = wall_time;
  opts.log = &std::cerr;
  const auto results = lab::run_experiment(cfg, opts);
  std::size_t failed = 0;
  for (const auto& r : results) failed += r.ok() ? 0 : 1;
  std::cerr << results.size() << " runs, " << failed << " failed; results in " << cfg.output_dir.string()
            << "\n";
  return !results.empty() && failed == results.size() ? kRuntimeFailure : kOk;
}

int cmd_table(const std::string& path, const std::string& format, const std::string& metric) {
  const auto results = lab::read_results_csv(path);
  const auto fmt = format == "csv" ? lab::TableFormat::csv : lab::TableFormat::markdown;
  std::cout << lab::emit_table(results, fmt, metric == "best_val");
  return kOk;
}

int cmd_check() {
  bool all = true;
  for (const auto& s : lab::checks::property_suites()) {
    std::printf("%s %-20s %6.2fs  %s\n", s.passed ? "PASS" : "FAIL", s.name.c_str(), s.seconds, s.detail.c_str());
    all = all && s.passed;
  }
  return all ? kOk : kRuntimeFailure;
}

int cmd_pretrain(const std::string& config_path, const std::string& out) {
  const lab::ExperimentConfig cfg = configured(config_path);
  const lab::DatasetSplits data = lab::load_dataset(cfg);
  const std::uint64_t seed = cfg.seeds.front();
  const lab::EncoderParams enc = lab::pretrained_encoder(cfg, data.train.x, seed);
  const std::filesystem::path target(out);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  lab::write_checkpoint(out, lab::named_tensors(enc),
                        {{"kind", "encoder"}, {"seed", seed}, {"config_hash", cfg.hash()}});
  std::cerr << "encoder for seed " << seed << " written to " << out << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label-noise robustness experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir, results_path, format = "md", metric = "final", ckpt;
  std::size_t jobs = 1;
  bool wall_time = false;

  auto* run = app.add_subcommand("run", "Run every cell of an experiment config");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "Output directory (overrides output_dir)");
  run->add_flag("--record-wall-time", wall_time, "Store per-run wall time (results stop being byte-stable)");

  auto* table = app.add_subcommand("table", "Summarize a results CSV");
  table->add_option("--results", results_path, "results.csv")->required()->check(CLI::ExistingFile);
  table->add_option("--format", format, "md or csv")->check(CLI::IsMember({"md", "csv"}));
  table->add_option("--metric", metric, "final or best_val")->check(CLI::IsMember({"final", "best_val"}));

  auto* check = app.add_subcommand("check", "Run the built-in property suites");

  auto* pretrain = app.add_subcommand("pretrain", "Contrastively pretrain an encoder for the first seed");
  pretrain->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  pretrain->add_option("--out", ckpt, "Checkpoint manifest path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(config_path, out_dir, jobs, wall_time);
    if (*table) return cmd_table(results_path, format, metric);
    if (*check) return cmd_check();
    if (*pretrain) return cmd_pretrain(config_path, ckpt);
  } catch (const lab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kOk;
}
