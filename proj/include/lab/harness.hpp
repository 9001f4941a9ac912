#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lab/config.hpp"
#include "lab/dataset.hpp"
#include "lab/model.hpp"
#include "lab/train.hpp"

namespace lab {

struct RunResult {
  std::string run_id;
  std::string method;
  std::string initializer;
  std::string noise_kind;
  double noise_rate = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> final_test_acc;
  std::optional<double> best_val_test_acc;
  std::size_t epochs = 0;
  double wall_time_seconds = 0.0;
  /// Empty for successful runs.
  std::string error;

  bool ok() const { return error.empty(); }
};

/// Canonical result order: noise rate, noise kind, method, initializer, seed.
bool canonical_less(const RunResult& a, const RunResult& b);

struct RunOptions {
  std::size_t jobs = 1;
  /// Off by default so that results files are byte-reproducible.
  bool record_wall_time = false;
  bool write_files = true;
  /// Progress lines; null for silence.
  std::ostream* log = nullptr;
};

/// Synthesizes or ingests and splits the configured data. Noise is not
/// applied here; validation and test labels are always clean.
DatasetSplits load_dataset(const ExperimentConfig& config);

/// Encoder for `seed` after contrastive pretraining on the training
/// features. Labels are not passed in.
EncoderParams pretrained_encoder(const ExperimentConfig& config, const Array& train_features,
                                 std::uint64_t seed);
/// Fresh Glorot encoder for `seed`; also the starting point of pretraining.
EncoderParams random_encoder(const ExperimentConfig& config, std::size_t input_dim, std::uint64_t seed);

/// Every (noise, method, initializer, seed) cell. Failed cells are returned
/// as rows with `error` set. With write_files, output_dir receives
/// results.csv, failures.jsonl, histories/ and config.json; rows are also
/// appended to results.partial.csv as they finish.
std::vector<RunResult> run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

inline constexpr const char* kResultsHeader =
    "run_id,method,initializer,noise_kind,noise_rate,seed,final_test_acc,best_val_test_acc,epochs,"
    "wall_time_seconds";

std::string csv_row(const RunResult& r);
std::string results_csv(std::span<const RunResult> results);
std::vector<RunResult> parse_results_csv(const std::string& text);
std::vector<RunResult> read_results_csv(const std::filesystem::path& path);

enum class TableFormat { csv, markdown };

/// Markdown: one row per (method, initializer), one column per noise setting
/// in ascending rate, cells "mean ± std" over seeds (population std).
std::string emit_table(std::span<const RunResult> results, TableFormat format, bool use_best_val = false);

nlohmann::json history_json(const History& h);

}  // namespace lab
