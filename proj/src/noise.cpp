#include "lab/noise.hpp"

#include <algorithm>
#include <cmath>

#include "lab/error.hpp"
#include "lab/random.hpp"

namespace lab {

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::symmetric: return "symmetric";
    case NoiseKind::asymmetric_map: return "asymmetric_map";
    case NoiseKind::circular_group: return "circular_group";
  }
  return "?";
}

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "symmetric") return NoiseKind::symmetric;
  if (name == "asymmetric_map") return NoiseKind::asymmetric_map;
  if (name == "circular_group") return NoiseKind::circular_group;
  throw ConfigError("unknown noise kind '" + name + "'");
}

void NoiseSpec::validate(std::size_t num_classes) const {
  if (num_classes == 0) throw ConfigError("noise: class count must be positive");
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw ConfigError("noise: rate " + std::to_string(rate) + " outside [0, 1]");
  }
  switch (kind) {
    case NoiseKind::symmetric:
      break;
    case NoiseKind::asymmetric_map:
      for (const auto& [from, to] : mapping) {
        if (from >= num_classes || to >= num_classes) {
          throw ConfigError("noise: mapping " + std::to_string(from) + "->" +
                            std::to_string(to) + " references a class >= " +
                            std::to_string(num_classes));
        }
      }
      break;
    case NoiseKind::circular_group:
      if (group_size == 0 || num_classes % group_size != 0) {
        throw ConfigError("noise: group_size " + std::to_string(group_size) +
                          " does not divide " + std::to_string(num_classes));
      }
      break;
  }
}

std::map<std::size_t, std::size_t> cifar10_asymmetric_pairs() {
  // airplane 0, automobile 1, bird 2, cat 3, deer 4, dog 5, horse 7, truck 9
  return {{9, 1}, {2, 0}, {4, 7}, {3, 5}, {5, 3}};
}

std::size_t circular_next(std::size_t label, std::size_t group_size) {
  const std::size_t group = label / group_size;
  return group * group_size + (label % group_size + 1) % group_size;
}

TransitionMatrix::TransitionMatrix(std::size_t num_classes, std::vector<double> entries)
    : k_(num_classes), entries_(std::move(entries)) {
  if (entries_.size() != k_ * k_) throw ShapeError("transition matrix must be K x K");
}

TransitionMatrix TransitionMatrix::identity(std::size_t num_classes) {
  std::vector<double> e(num_classes * num_classes, 0.0);
  for (std::size_t a = 0; a < num_classes; ++a) e[a * num_classes + a] = 1.0;
  return TransitionMatrix(num_classes, std::move(e));
}

double TransitionMatrix::max_abs_diff(const TransitionMatrix& other) const {
  if (other.k_ != k_) throw ShapeError("transition matrices differ in size");
  double worst = 0.0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    worst = std::max(worst, std::abs(entries_[i] - other.entries_[i]));
  }
  return worst;
}

double TransitionMatrix::row_sum_error() const {
  double worst = 0.0;
  for (std::size_t a = 0; a < k_; ++a) {
    double s = 0.0;
    for (double v : row(a)) s += v;
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

TransitionMatrix transition_matrix_of(const NoiseSpec& spec, std::size_t num_classes) {
  spec.validate(num_classes);
  const std::size_t k = num_classes;
  const double p = spec.rate;
  std::vector<double> t(k * k, 0.0);
  const auto flip_row = [&](std::size_t a, std::size_t target) {
    if (target == a) {
      t[a * k + a] = 1.0;
    } else {
      t[a * k + a] = 1.0 - p;
      t[a * k + target] = p;
    }
  };
  switch (spec.kind) {
    case NoiseKind::symmetric:
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
          t[a * k + b] = p / static_cast<double>(k) + (a == b ? 1.0 - p : 0.0);
        }
      }
      break;
    case NoiseKind::asymmetric_map:
      for (std::size_t a = 0; a < k; ++a) {
        const auto it = spec.mapping.find(a);
        flip_row(a, it == spec.mapping.end() ? a : it->second);
      }
      break;
    case NoiseKind::circular_group:
      for (std::size_t a = 0; a < k; ++a) flip_row(a, circular_next(a, spec.group_size));
      break;
  }
  return TransitionMatrix(k, std::move(t));
}

Corruption corrupt_labels(std::span<const int> labels, const NoiseSpec& spec,
                          std::size_t num_classes) {
  const TransitionMatrix t = transition_matrix_of(spec, num_classes);
  Corruption out;
  out.labels.resize(labels.size());
  out.flipped.resize(labels.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw ConfigError("corrupt_labels: label " + std::to_string(y) + " at index " +
                        std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    const auto row = t.row(static_cast<std::size_t>(y));
    const double u = counter_uniform(spec.seed, i);
    // Inverse CDF; rounding in the running sum falls back to the last
    // class with positive mass.
    std::size_t pick = num_classes;
    double cdf = 0.0;
    for (std::size_t b = 0; b < num_classes; ++b) {
      cdf += row[b];
      if (u < cdf) {
        pick = b;
        break;
      }
    }
    if (pick == num_classes) {
      for (std::size_t b = num_classes; b-- > 0;) {
        if (row[b] > 0.0) {
          pick = b;
          break;
        }
      }
    }
    out.labels[i] = static_cast<int>(pick);
    out.flipped[i] = out.labels[i] != y ? 1 : 0;
  }
  return out;
}

TransitionMatrix empirical_transition(std::span<const int> before, std::span<const int> after,
                                      std::size_t num_classes) {
  if (before.size() != after.size()) {
    throw ShapeError("empirical_transition: label arrays differ in length");
  }
  const std::size_t k = num_classes;
  std::vector<double> counts(k * k, 0.0);
  std::vector<double> totals(k, 0.0);
  for (std::size_t i = 0; i < before.size(); ++i) {
    const int a = before[i], b = after[i];
    if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= k || static_cast<std::size_t>(b) >= k) {
      throw ConfigError("empirical_transition: label outside [0, " + std::to_string(k) +
                        ") at index " + std::to_string(i));
    }
    counts[static_cast<std::size_t>(a) * k + static_cast<std::size_t>(b)] += 1.0;
    totals[static_cast<std::size_t>(a)] += 1.0;
  }
  std::string missing;
  for (std::size_t a = 0; a < k; ++a) {
    if (totals[a] == 0.0) missing += (missing.empty() ? "" : ", ") + std::to_string(a);
  }
  if (!missing.empty()) {
    throw ConfigError("empirical_transition: classes absent from input: " + missing);
  }
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) counts[a * k + b] /= totals[a];
  }
  return TransitionMatrix(k, std::move(counts));
}

}  // namespace lab
