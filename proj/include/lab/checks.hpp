#pragma once

#include <string>
#include <vector>

namespace lab::checks {

/// Outcome of one self-check suite.
struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Reverse-mode gradients of every primitive and composite loss against
/// central differences, 100 random points each.
SuiteResult gradient_suite();
/// Meta-gradient of the look-ahead validation loss against central
/// differences on 20 random small instances.
SuiteResult second_order_suite();
/// q -> 1 and q -> 0 limits of L_q and the symmetric-loss condition.
SuiteResult loss_limit_suite();
/// NT-Xent against direct enumeration of its definition.
SuiteResult nt_xent_suite();
/// Empirical label-flip frequencies against the analytic transition law.
SuiteResult noise_law_suite();

/// All of the above, in that order.
std::vector<SuiteResult> property_suites();

}  // namespace lab::checks
