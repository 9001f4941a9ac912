#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace lab {

enum class NoiseKind { symmetric, asymmetric_map, circular_group };

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& name);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::symmetric;
  double rate = 0.0;
  /// Source class -> target class (asymmetric_map only). List both
  /// directions for a swap such as CAT <-> DOG.
  std::map<std::size_t, std::size_t> mapping;
  /// Classes per group (circular_group only); must divide K.
  std::size_t group_size = 0;
  std::uint64_t seed = 0;

  /// Throws ConfigError if these settings are not valid for K classes.
  void validate(std::size_t num_classes) const;
};

/// CIFAR-10 pairs: TRUCK->AUTOMOBILE, BIRD->AIRPLANE, DEER->HORSE, CAT<->DOG.
std::map<std::size_t, std::size_t> cifar10_asymmetric_pairs();

/// Next class within consecutive-index groups of `group_size`.
std::size_t circular_next(std::size_t label, std::size_t group_size);

/// Row-stochastic K x K matrix, T(a, b) = P(observed b | true a).
class TransitionMatrix {
 public:
  TransitionMatrix(std::size_t num_classes, std::vector<double> entries);
  static TransitionMatrix identity(std::size_t num_classes);

  std::size_t num_classes() const { return k_; }
  double operator()(std::size_t from, std::size_t to) const { return entries_[from * k_ + to]; }
  std::span<const double> row(std::size_t from) const {
    return std::span<const double>(entries_).subspan(from * k_, k_);
  }
  /// Largest |T(a,b) - other(a,b)|.
  double max_abs_diff(const TransitionMatrix& other) const;
  /// Largest |sum_b T(a,b) - 1|.
  double row_sum_error() const;

 private:
  std::size_t k_;
  std::vector<double> entries_;
};

TransitionMatrix transition_matrix_of(const NoiseSpec& spec, std::size_t num_classes);

struct Corruption {
  std::vector<int> labels;
  /// 1 where the corrupted label differs from the original.
  std::vector<std::uint8_t> flipped;
};

/// Resamples each label from its row of the transition matrix. Draw i uses a
/// counter-based stream keyed by (spec.seed, i), so the result depends only on
/// the inputs and not on evaluation order.
Corruption corrupt_labels(std::span<const int> labels, const NoiseSpec& spec,
                          std::size_t num_classes);

/// Row-normalized count matrix of (before -> after) pairs.
TransitionMatrix empirical_transition(std::span<const int> before, std::span<const int> after,
                                      std::size_t num_classes);

}  // namespace lab
