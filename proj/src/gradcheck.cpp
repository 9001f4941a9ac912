#include "lab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "lab/error.hpp"

namespace lab {

double evaluate_scalar(const ScalarFn& f, std::span<const Array> leaves) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(leaves.size());
  for (const Array& a : leaves) vars.push_back(tape.leaf(a));
  return f(tape, vars).value().item();
}

GradCheckReport check_gradient_report(const ScalarFn& f, std::span<const Array> leaves,
                                      double step) {
  if (!(step > 0.0)) throw DomainError("check_gradient: step must be positive");
  std::vector<Array> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Array& a : leaves) vars.push_back(tape.leaf(a));
    analytic = tape.gradients(f(tape, vars), vars);
  }

  GradCheckReport report;
  std::vector<Array> probe(leaves.begin(), leaves.end());
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    const auto base = leaves[l].data();
    std::vector<double> buf(base.begin(), base.end());
    std::vector<double> numeric(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
      const double x = buf[i];
      buf[i] = x + step;
      probe[l] = Array(leaves[l].shape(), buf);
      const double hi = evaluate_scalar(f, probe);
      buf[i] = x - step;
      probe[l] = Array(leaves[l].shape(), buf);
      const double lo = evaluate_scalar(f, probe);
      buf[i] = x;
      numeric[i] = (hi - lo) / (2.0 * step);
    }
    // Entry errors are measured against the leaf's largest derivative: an
    // entry far below that scale sits under the difference quotient's
    // round-off floor, so dividing by its own magnitude only measures noise.
    double scale = 1e-12;
    for (double n : numeric) scale = std::max(scale, std::abs(n));
    for (std::size_t i = 0; i < buf.size(); ++i) {
      const double a = analytic[l][i];
      const double err = std::abs(a - numeric[i]) / scale;
      if (err > report.max_rel_error || !std::isfinite(err)) {
        report = {err, l, i, a, numeric[i]};
      }
    }
    probe[l] = leaves[l];
  }
  return report;
}

}  // namespace lab
