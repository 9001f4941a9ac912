#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lab/array.hpp"

namespace lab {

/// N samples of dimension D with integer labels in [0, K).
///
/// `flipped` is either empty (unknown) or holds one flag per sample marking
/// labels that a noise injector changed.
struct LabeledDataset {
  Array x;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::vector<std::uint8_t> flipped;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return x.dim(1); }
  bool empty() const { return labels.empty(); }

  /// Throws ShapeError/DomainError describing the first inconsistency.
  void validate() const;
  /// One-hot label matrix (N, K).
  Array targets() const;
  /// Rows in the given order; `flipped` is carried along when present.
  LabeledDataset subset(std::span<const std::size_t> rows) const;
};

/// Copies the listed rows of an (N, D) array.
Array take_rows(const Array& x, std::span<const std::size_t> rows);

/// Reads a headered CSV of numeric columns. `label_column` names the label
/// column; every other column is a feature. K is inferred as max label + 1.
LabeledDataset ingest_csv(const std::filesystem::path& path, const std::string& label_column);

enum class Geometry { gaussian_blobs, concentric_rings };

struct SyntheticSpec {
  std::size_t num_classes = 2;
  std::size_t n_informative = 2;
  std::size_t n_nuisance = 0;
  Geometry geometry = Geometry::gaussian_blobs;
  std::size_t n_train = 1000;
  std::size_t n_val = 100;
  std::size_t n_test = 1000;
  double class_separation = 4.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DatasetSplits {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
};

/// Class structure lives in the first n_informative coordinates (blob centres
/// spaced `class_separation` apart on a circle, or rings of radius
/// (k + 1) * class_separation), nuisance coordinates are standard normal, and
/// every sample is then multiplied by one seeded random rotation. Each split
/// is class-balanced to within one sample.
DatasetSplits generate_synthetic_dataset(const SyntheticSpec& spec);

}  // namespace lab
