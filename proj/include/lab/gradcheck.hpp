#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "lab/array.hpp"
#include "lab/tape.hpp"

namespace lab {

/// Builds a scalar on `tape` from leaf nodes bound to the given values.
using ScalarFn = std::function<Var(Tape& tape, std::span<const Var> leaves)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_leaf = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares reverse-mode gradients of `f` against central differences.
/// Relative error per entry is |analytic - numeric| divided by the largest
/// numeric derivative magnitude within the same leaf (floored at 1e-12).
GradCheckReport check_gradient_report(const ScalarFn& f, std::span<const Array> leaves,
                                      double step = 1e-5);

inline double check_gradient(const ScalarFn& f, std::span<const Array> leaves,
                             double step = 1e-5) {
  return check_gradient_report(f, leaves, step).max_rel_error;
}

/// Value of `f` at the given leaf values (no gradient).
double evaluate_scalar(const ScalarFn& f, std::span<const Array> leaves);

}  // namespace lab
