#include "lab/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "lab/error.hpp"
#include "lab/losses.hpp"
#include "lab/random.hpp"

namespace lab {

void LabeledDataset::validate() const {
  if (x.rank() != 2) throw ShapeError("dataset: features must be (N, D), got " + shape_str(x.shape()));
  if (x.dim(0) != labels.size()) {
    throw ShapeError("dataset: " + std::to_string(x.dim(0)) + " feature rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  if (!flipped.empty() && flipped.size() != labels.size()) {
    throw ShapeError("dataset: flipped mask length differs from label count");
  }
  if (num_classes < 2) throw ConfigError("dataset: need at least two classes");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw DomainError("dataset: label " + std::to_string(labels[i]) + " at row " +
                        std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  if (!x.all_finite()) throw DomainError("dataset: non-finite feature value");
}

Array LabeledDataset::targets() const { return one_hot(labels, num_classes); }

Array take_rows(const Array& x, std::span<const std::size_t> rows) {
  const std::size_t d = x.dim(1);
  std::vector<double> out(rows.size() * d);
  const auto src = x.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.dim(0)) throw ShapeError("take_rows: row index out of range");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return Array({rows.size(), d}, std::move(out));
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  LabeledDataset out;
  out.x = take_rows(x, rows);
  out.num_classes = num_classes;
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(labels[r]);
  if (!flipped.empty()) {
    for (std::size_t r : rows) out.flipped.push_back(flipped[r]);
  }
  return out;
}

// CSV ingestion ----------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

LabeledDataset ingest_csv(const std::filesystem::path& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open file");

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_fields(line);
      break;
    }
  }
  if (header.empty()) throw ConfigError(path.string() + ": empty file");
  const auto it = std::find(header.begin(), header.end(), label_column);
  if (it == header.end()) {
    throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": no column named '" +
                      label_column + "'");
  }
  const auto label_at = static_cast<std::size_t>(it - header.begin());
  const std::size_t d = header.size() - 1;

  std::vector<double> features;
  LabeledDataset ds;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    if (fields.size() != header.size()) {
      throw ConfigError(where + "expected " + std::to_string(header.size()) + " fields, found " +
                        std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const std::string& f = fields[c];
      if (c == label_at) {
        long v = 0;
        const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (ec != std::errc() || p != f.data() + f.size()) {
          throw ConfigError(where + "label '" + f + "' is not an integer");
        }
        if (v < 0) throw ConfigError(where + "negative label " + f);
        ds.labels.push_back(static_cast<int>(v));
        max_label = std::max(max_label, static_cast<int>(v));
      } else {
        double v = 0.0;
        const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (ec != std::errc() || p != f.data() + f.size() || !std::isfinite(v)) {
          throw ConfigError(where + "column '" + header[c] + "' is not numeric: '" + f + "'");
        }
        features.push_back(v);
      }
    }
  }
  if (ds.labels.empty()) throw ConfigError(path.string() + ": header but no data rows");
  if (d == 0) throw ConfigError(path.string() + ": no feature columns");
  ds.num_classes = static_cast<std::size_t>(max_label) + 1;
  ds.x = Array({ds.labels.size(), d}, std::move(features));
  return ds;
}

// Synthetic data ---------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ConfigError("synthetic: need at least two classes");
  if (n_informative < 2) throw ConfigError("synthetic: n_informative must be >= 2");
  if (n_train == 0 || n_val == 0 || n_test == 0) {
    throw ConfigError("synthetic: split sizes must be positive");
  }
  if (!(class_separation > 0.0) || !std::isfinite(class_separation)) {
    throw ConfigError("synthetic: class_separation must be positive");
  }
}

namespace {

/// Orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
std::vector<double> random_rotation(std::size_t d, Rng& rng) {
  std::vector<double> q(d * d);
  for (double& v : q) v = rng.normal();
  for (std::size_t i = 0; i < d; ++i) {
    double* row = &q[i * d];
    for (std::size_t j = 0; j < i; ++j) {
      const double* prev = &q[j * d];
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += row[c] * prev[c];
      for (std::size_t c = 0; c < d; ++c) row[c] -= dot * prev[c];
    }
    double norm = 0.0;
    for (std::size_t c = 0; c < d; ++c) norm += row[c] * row[c];
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < d; ++c) row[c] /= norm;
  }
  return q;
}

LabeledDataset make_split(const SyntheticSpec& spec, std::size_t n, std::uint64_t split,
                          std::span<const double> rotation) {
  const std::size_t k = spec.num_classes;
  const std::size_t inf = spec.n_informative;
  const std::size_t d = inf + spec.n_nuisance;
  Rng rng(derive_seed(spec.seed, {0x5D17, split}));

  std::vector<int> labels;
  labels.reserve(n);
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t count = n / k + (c < n % k ? 1 : 0);
    labels.insert(labels.end(), count, static_cast<int>(c));
  }
  const auto order = rng.permutation(n);

  const double blob_radius =
      spec.class_separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(k)));
  std::vector<double> raw(d), x(n * d);
  LabeledDataset ds;
  ds.num_classes = k;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[order[i]];
    ds.labels[i] = y;
    std::fill(raw.begin(), raw.end(), 0.0);
    if (spec.geometry == Geometry::gaussian_blobs) {
      const double angle = 2.0 * std::numbers::pi * y / static_cast<double>(k);
      raw[0] = blob_radius * std::cos(angle);
      raw[1] = blob_radius * std::sin(angle);
    } else {
      double norm = 0.0;
      do {
        norm = 0.0;
        for (std::size_t c = 0; c < inf; ++c) {
          raw[c] = rng.normal();
          norm += raw[c] * raw[c];
        }
      } while (norm == 0.0);
      const double radius = (y + 1) * spec.class_separation / std::sqrt(norm);
      for (std::size_t c = 0; c < inf; ++c) raw[c] *= radius;
    }
    for (std::size_t c = 0; c < d; ++c) raw[c] += rng.normal();

    double* out = &x[i * d];
    for (std::size_t r = 0; r < d; ++r) {
      const double* q = &rotation[r * d];
      for (std::size_t c = 0; c < d; ++c) out[c] += raw[r] * q[c];
    }
  }
  ds.x = Array({n, d}, std::move(x));
  return ds;
}

}  // namespace

DatasetSplits generate_synthetic_dataset(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t d = spec.n_informative + spec.n_nuisance;
  Rng rot_rng(derive_seed(spec.seed, {0x0707}));
  const auto rotation = random_rotation(d, rot_rng);
  return {make_split(spec, spec.n_train, 0, rotation), make_split(spec, spec.n_val, 1, rotation),
          make_split(spec, spec.n_test, 2, rotation)};
}

}  // namespace lab
