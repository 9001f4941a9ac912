#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lab/dataset.hpp"
#include "lab/losses.hpp"
#include "lab/noise.hpp"
#include "lab/optim.hpp"

namespace lab {

enum class Initializer { random, contrastive };

std::string to_string(Initializer init);
Initializer parse_initializer(const std::string& name);

/// One training method of the sweep: plain ERM with a loss, or
/// meta-reweighting.
struct MethodSpec {
  bool mwnet = false;
  LossSpec loss = LossSpec::cce();
  /// lq without an explicit q: 0.66 below 80% noise, 0.5 from there on.
  bool auto_q = false;
  double meta_lr = 1e-3;
  std::size_t hidden = 100;
  std::size_t val_batch_size = 0;

  /// Row label in results: "cce", "mae", "lq", "lq(q=0.7)", "mwnet".
  std::string label() const;
  LossSpec loss_for_rate(double noise_rate) const;
};

struct PretrainSpec {
  TrainConfig train;
  double temperature = 0.5;
  std::size_t projection_hidden = 64;
  std::size_t projection_dim = 32;
  double jitter_sigma = 0.2;
  double mask_prob = 0.1;
};

struct DatasetSpec {
  /// Exactly one of the two sources is used.
  std::optional<SyntheticSpec> synthetic;
  std::filesystem::path csv_path;
  std::string label_column = "label";
};

/// Applies to ingested CSV data only; synthetic specs carry their own sizes.
struct SplitSpec {
  double val_fraction = 0.02;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  SplitSpec split;
  std::vector<NoiseSpec> noise;
  std::vector<MethodSpec> methods;
  std::vector<Initializer> initializers;
  /// Encoder widths after the input layer.
  std::vector<std::size_t> encoder_hidden{64, 32};
  PretrainSpec pretrain;
  TrainConfig train;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir = "results";

  /// Checks everything that does not need the data itself.
  void validate() const;
  /// Canonical form; parse_config(to_json()) reproduces the config.
  nlohmann::json to_json() const;
  /// 16 hex digits of FNV-1a over the canonical JSON without output_dir.
  std::string hash() const;
};

/// Throws ConfigError naming the offending key.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Replaces the seed list with the single seed in `value` (LAB_SEED).
void apply_seed_override(ExperimentConfig& config, const char* value);

}  // namespace lab
