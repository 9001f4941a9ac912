#include "lab/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <utility>

#include "lab/gradcheck.hpp"
#include "lab/losses.hpp"
#include "lab/model.hpp"
#include "lab/mwnet.hpp"
#include "lab/noise.hpp"
#include "lab/random.hpp"
#include "lab/tape.hpp"

namespace lab::checks {
namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

template <class Body>
SuiteResult timed(const std::string& name, Body body) {
  const auto start = Clock::now();
  SuiteResult r{name, false, "", 0.0};
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return r;
}

Array uniform_array(Rng& rng, const Shape& shape, double lo, double hi) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Array(shape, std::move(v));
}

/// Values bounded away from zero so relu's kink is never inside a stencil.
Array away_from_zero(Rng& rng, const Shape& shape) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 2.0);
  return Array(shape, std::move(v));
}

Array random_targets(Rng& rng, std::size_t rows, std::size_t k) {
  std::vector<int> labels(rows);
  for (int& y : labels) y = static_cast<int>(rng.below(k));
  return one_hot(labels, k);
}

// A case draws leaf values and builds the scalar objective for one point.
// Non-scalar ops are reduced with fixed random weights: sum(w * op(x)).
struct Point {
  std::vector<Array> leaves;
  ScalarFn f;
};
using CaseMaker = std::function<Point(Rng&)>;

ScalarFn projected(std::function<Var(Tape&, std::span<const Var>)> op, Array weights) {
  return [op = std::move(op), weights = std::move(weights)](Tape& t, std::span<const Var> l) {
    return sum(op(t, l) * t.constant(weights));
  };
}

CaseMaker unary(Shape shape, std::function<Var(Var)> op, Shape out, double lo = -2, double hi = 2) {
  return [=](Rng& rng) {
    return Point{{uniform_array(rng, shape, lo, hi)},
                 projected([op](Tape&, std::span<const Var> l) { return op(l[0]); },
                           uniform_array(rng, out, -1, 1))};
  };
}

CaseMaker binary(Shape a, Shape b, Shape out, std::function<Var(Var, Var)> op) {
  return [=](Rng& rng) {
    return Point{{uniform_array(rng, a, -2, 2), uniform_array(rng, b, -2, 2)},
                 projected([op](Tape&, std::span<const Var> l) { return op(l[0], l[1]); },
                           uniform_array(rng, out, -1, 1))};
  };
}

std::vector<std::pair<std::string, CaseMaker>> gradient_cases() {
  std::vector<std::pair<std::string, CaseMaker>> cases;
  const Shape m34{3, 4};
  cases.emplace_back("add", binary(m34, m34, m34, [](Var a, Var b) { return a + b; }));
  cases.emplace_back("sub", binary(m34, m34, m34, [](Var a, Var b) { return a - b; }));
  cases.emplace_back("mul", binary(m34, m34, m34, [](Var a, Var b) { return a * b; }));
  cases.emplace_back("matmul", binary(m34, {4, 2}, {3, 2}, [](Var a, Var b) { return matmul(a, b); }));
  cases.emplace_back("scale", [](Rng& rng) {
    const double c = rng.uniform(-3, 3);
    return Point{{uniform_array(rng, {3, 4}, -2, 2)},
                 projected([c](Tape&, std::span<const Var> l) { return l[0] * c; },
                           uniform_array(rng, {3, 4}, -1, 1))};
  });
  cases.emplace_back("transpose", unary(m34, [](Var a) { return transpose(a); }, {4, 3}));
  cases.emplace_back("exp", unary(m34, [](Var a) { return exp(a); }, m34));
  cases.emplace_back("log", unary(m34, [](Var a) { return log(a); }, m34, 0.2, 3.0));
  cases.emplace_back("pow", [](Rng& rng) {
    const double q = rng.uniform(-1.5, 2.5);
    return Point{{uniform_array(rng, {3, 4}, 0.3, 2.0)},
                 projected([q](Tape&, std::span<const Var> l) { return pow(l[0], q); },
                           uniform_array(rng, {3, 4}, -1, 1))};
  });
  cases.emplace_back("sum", unary(m34, [](Var a) { return sum(a); }, {1}));
  cases.emplace_back("mean", unary(m34, [](Var a) { return mean(a); }, {1}));
  cases.emplace_back("relu", [](Rng& rng) {
    return Point{{away_from_zero(rng, {3, 4})},
                 projected([](Tape&, std::span<const Var> l) { return relu(l[0]); },
                           uniform_array(rng, {3, 4}, -1, 1))};
  });
  cases.emplace_back("sigmoid", unary(m34, [](Var a) { return sigmoid(a); }, m34, -5, 5));
  cases.emplace_back("concat", binary(m34, {3, 2}, {3, 6}, [](Var a, Var b) {
                       const Var parts[] = {a, b};
                       return concat(parts, 1);
                     }));
  cases.emplace_back("slice", unary(m34, [](Var a) { return slice(a, 1, 1, 2); }, {3, 2}));
  cases.emplace_back("embed", unary({3, 2}, [](Var a) { return embed(a, {3, 5}, 1, 2); }, {3, 5}));
  cases.emplace_back("l2norm", unary(m34, [](Var a) { return l2norm(a); }, {3, 1}));
  cases.emplace_back("sum_last", unary(m34, [](Var a) { return sum_last(a); }, {3, 1}));
  cases.emplace_back("expand_last", unary({3, 1}, [](Var a) { return expand_last(a, 4); }, m34));
  cases.emplace_back("broadcast", unary({1}, [](Var a) { return broadcast(a, {2, 3}); }, {2, 3}));
  cases.emplace_back("reshape", unary(m34, [](Var a) { return reshape(a, {2, 6}); }, {2, 6}));

  cases.emplace_back("softmax+cce", [](Rng& rng) {
    const Array t = random_targets(rng, 5, 4);
    return Point{{uniform_array(rng, {5, 4}, -3, 3)},
                 [t](Tape&, std::span<const Var> l) { return sum(cce_rows(l[0], t)); }};
  });
  cases.emplace_back("lq", [](Rng& rng) {
    const Array t = random_targets(rng, 5, 4);
    const double q = rng.uniform(0.05, 1.0);
    return Point{{uniform_array(rng, {5, 4}, -3, 3)},
                 [t, q](Tape&, std::span<const Var> l) { return sum(lq_rows(l[0], t, q)); }};
  });
  cases.emplace_back("mae", [](Rng& rng) {
    const Array t = random_targets(rng, 5, 4);
    return Point{{uniform_array(rng, {5, 4}, -3, 3)},
                 [t](Tape&, std::span<const Var> l) { return sum(mae_rows(l[0], t)); }};
  });
  cases.emplace_back("nt_xent", [](Rng& rng) {
    const double tau = rng.uniform(0.3, 1.5);
    return Point{{uniform_array(rng, {6, 3}, -2, 2)},
                 [tau](Tape&, std::span<const Var> l) { return nt_xent_loss(l[0], tau); }};
  });
  return cases;
}

// Meta-gradient oracle ------------------------------------------------------------

Array normal_array(Rng& rng, std::size_t r, std::size_t c, double scale) {
  std::vector<double> v(r * c);
  for (double& x : v) x = scale * rng.normal();
  return Array({r, c}, std::move(v));
}

LabeledDataset normal_batch(Rng& rng, std::size_t n) {
  LabeledDataset b;
  b.x = normal_array(rng, n, 2, 1.0);
  b.num_classes = 4;
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(rng.below(4)));
  return b;
}

double weight_by_definition(const WeightNet& net, double loss) {
  double out = net.output.bias[0];
  for (std::size_t j = 0; j < net.hidden_units(); ++j) {
    out += std::max(0.0, loss * net.hidden.weight[j] + net.hidden.bias[j]) * net.output.weight[j];
  }
  return 1.0 / (1.0 + std::exp(-out));
}

double softmax_nll(std::span<const double> logits, std::size_t label) {
  const ProbVector p = softmax(logits);
  return -std::log(p[label]);
}

struct MetaInstance {
  ClassifierParams clf;
  WeightNet net;
  LabeledDataset train;
  LabeledDataset val;
};

MetaInstance draw_instance(std::uint64_t seed) {
  Rng rng(seed);
  MetaInstance in;
  in.clf.encoder.layers.push_back({normal_array(rng, 2, 8, 0.8), normal_array(rng, 1, 8, 0.3)});
  in.clf.head = {normal_array(rng, 8, 4, 0.8), normal_array(rng, 1, 4, 0.3)};
  in.net = {{normal_array(rng, 1, 100, 0.5), normal_array(rng, 1, 100, 0.5)},
            {normal_array(rng, 100, 1, 0.3), normal_array(rng, 1, 1, 0.3)}};
  in.train = normal_batch(rng, 10);
  in.val = normal_batch(rng, 10);
  return in;
}

/// True when a difference stencil of half-width `margin` on some hidden
/// weight or bias would carry a weight-net pre-activation across zero, where
/// the central difference straddles relu's kink and has no derivative to
/// converge to.
bool near_kink(const MetaInstance& in, double margin) {
  const Array logits = predict_logits(in.clf, in.train.x);
  const std::size_t k = logits.dim(1);
  for (std::size_t i = 0; i < in.train.size(); ++i) {
    const double loss = softmax_nll(logits.data().subspan(i * k, k), in.train.labels[i]);
    for (std::size_t j = 0; j < in.net.hidden_units(); ++j) {
      const double z = loss * in.net.hidden.weight[j] + in.net.hidden.bias[j];
      if (std::abs(z) < margin * std::max(1.0, loss)) return true;
    }
  }
  return false;
}

/// Validation CCE after w' = w - alpha * grad_w mean(W(l_i) l_i), built from
/// first-order gradients only.
double lookahead(const ClassifierParams& clf, const WeightNet& net, const LabeledDataset& tr,
                 const LabeledDataset& va, double alpha) {
  const Array logits = predict_logits(clf, tr.x);
  const std::size_t k = logits.dim(1);
  std::vector<double> w;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    w.push_back(weight_by_definition(net, softmax_nll(logits.data().subspan(i * k, k), tr.labels[i])));
  }
  Tape tape;
  const BoundClassifier bound = bind_classifier(tape, clf, true);
  const Var rows = cce_rows(predict_logits(bound, tape.constant(tr.x)), tr.targets());
  const Var obj = sum(rows * tape.constant(Array({w.size(), 1}, w))) * (1.0 / static_cast<double>(w.size()));
  const auto g = tape.gradients(obj, bound.leaves());
  auto params = flatten(clf);
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<double> v(params[i].data().begin(), params[i].data().end());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] -= alpha * g[i][j];
    params[i] = Array(params[i].shape(), std::move(v));
  }
  const Array vl = predict_logits(unflatten(clf, params), va.x);
  double total = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) total += softmax_nll(vl.data().subspan(i * k, k), va.labels[i]);
  return total / static_cast<double>(va.size());
}

// Brute-force NT-Xent straight from the definition.
double nt_xent_by_definition(const std::vector<std::vector<double>>& z, double tau) {
  const auto cos = [](const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ab += a[i] * b[i];
      aa += a[i] * a[i];
      bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
  };
  double total = 0.0;
  for (std::size_t r = 0; r < z.size(); ++r) {
    const std::size_t partner = r % 2 == 0 ? r + 1 : r - 1;
    double denom = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      if (k != r) denom += std::exp(cos(z[r], z[k]) / tau);
    }
    total += -std::log(std::exp(cos(z[r], z[partner]) / tau) / denom);
  }
  return total;
}

Array stack(const std::vector<std::vector<double>>& rows) {
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Array({rows.size(), rows[0].size()}, std::move(flat));
}

std::vector<double> random_simplex(Rng& rng, std::size_t k) {
  std::vector<double> p(k);
  double total = 0.0;
  for (double& v : p) {
    v = -std::log(1.0 - rng.uniform());  // Dirichlet(1, ..., 1)
    total += v;
  }
  for (double& v : p) v /= total;
  return p;
}

}  // namespace

SuiteResult gradient_suite() {
  return timed("gradient suite", [](SuiteResult& r) {
    Rng rng(0x6AAD);
    double worst = 0.0;
    std::string worst_case;
    std::size_t cases = 0;
    for (const auto& [name, make] : gradient_cases()) {
      for (int point = 0; point < 100; ++point) {
        const Point p = make(rng);
        const double err = check_gradient(p.f, p.leaves, 1e-5);
        if (!(err <= worst)) {
          worst = err;
          worst_case = name;
        }
      }
      ++cases;
    }
    r.passed = worst < 1e-6;
    r.detail = std::to_string(cases) + " ops x 100 points, max rel error " + fmt("%.2e", worst) + " (" +
               worst_case + "), threshold 1e-6";
  });
}

SuiteResult second_order_suite() {
  return timed("second-order suite", [](SuiteResult& r) {
    double worst = 0.0;
    std::string where;
    std::uint64_t redraws = 0;
    const double h = 1e-4;
    const double alpha = 0.5;
    for (std::uint64_t instance = 0; instance < 20; ++instance) {
      MetaInstance in;
      std::uint64_t attempt = 0;
      do {
        in = draw_instance(derive_seed(0x2ED0, {instance, attempt++}));
      } while (near_kink(in, 2.0 * h));
      redraws += attempt - 1;
      const ClassifierParams& clf = in.clf;
      const WeightNet& net = in.net;
      const LabeledDataset& tr = in.train;
      const LabeledDataset& va = in.val;

      const auto analytic = meta_gradient(clf, net, tr, va, alpha);
      const auto theta = flatten(net);
      for (std::size_t a = 0; a < theta.size(); ++a) {
        std::vector<double> numeric(theta[a].size());
        for (std::size_t j = 0; j < numeric.size(); ++j) {
          const auto at = [&](double delta) {
            auto t = theta;
            std::vector<double> v(t[a].data().begin(), t[a].data().end());
            v[j] += delta;
            t[a] = Array(t[a].shape(), std::move(v));
            return lookahead(clf, unflatten(net, t), tr, va, alpha);
          };
          numeric[j] = (at(h) - at(-h)) / (2 * h);
        }
        // Same normalization as check_gradient: the leaf's largest entry.
        double scale = 1e-12;
        for (double n : numeric) scale = std::max(scale, std::abs(n));
        for (std::size_t j = 0; j < numeric.size(); ++j) {
          const double err = std::abs(analytic[a][j] - numeric[j]) / scale;
          if (err > worst) {
            worst = err;
            where = "instance " + std::to_string(instance) + " param " + std::to_string(a) + "[" +
                    std::to_string(j) + "] analytic " + fmt("%.6e", analytic[a][j]) + " numeric " +
                    fmt("%.6e", numeric[j]);
          }
        }
      }
    }
    r.passed = worst < 1e-4;
    r.detail = "20 instances (10 samples, 2-8-4 classifier, 1-100-1 weight net), max rel error " +
               fmt("%.2e", worst) + ", threshold 1e-4, " +
               std::to_string(redraws) + " redraws at relu kinks";
    if (!r.passed) r.detail += "; worst at " + where;
  });
}

SuiteResult loss_limit_suite() {
  return timed("loss-limit suite", [](SuiteResult& r) {
    Rng rng(0x10CC);
    bool bitwise = true;
    double worst_gap = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const std::vector<double> p = random_simplex(rng, 2 + rng.below(9));
      const ProbVector pv(p);
      const std::size_t y = rng.below(p.size());
      const double a = loss_value(LossSpec::lq(1.0), pv, y);
      const double b = loss_value(LossSpec::mae(), pv, y);
      bitwise = bitwise && std::memcmp(&a, &b, sizeof a) == 0;

      const double py = rng.uniform(0.05, 0.95);
      const ProbVector two(std::vector<double>{py, 1.0 - py});
      const double c = loss_value(LossSpec::cce(), two, 0);
      const double q = loss_value(LossSpec::lq(0.001), two, 0);
      worst_gap = std::max(worst_gap, std::abs(q - c) / c);
    }
    double mae_defect = 0.0;
    double cce_defect = 1e300;
    for (std::size_t k : {2U, 10U, 100U}) {
      std::vector<ProbVector> samples;
      for (int i = 0; i < 1000; ++i) samples.emplace_back(random_simplex(rng, k));
      mae_defect = std::max(mae_defect, symmetry_defect(LossSpec::mae(), samples));
      cce_defect = std::min(cce_defect, symmetry_defect(LossSpec::cce(), samples));
    }
    r.passed = bitwise && worst_gap < 0.005 && mae_defect < 1e-12 && cce_defect > 0.1;
    r.detail = std::string("lq(1)==mae bitwise: ") + (bitwise ? "yes" : "no") +
               "; max |lq(0.001)-cce|/cce " + fmt("%.2e", worst_gap) + " (< 5e-3); MAE defect " +
               fmt("%.1e", mae_defect) + " (< 1e-12); min CCE defect " + fmt("%.3g", cce_defect) + " (> 0.1)";
  });
}

SuiteResult nt_xent_suite() {
  return timed("NT-Xent oracle", [](SuiteResult& r) {
    Rng rng(0x7E47);
    double worst = 0.0;
    double m1 = 0.0;
    for (std::size_t m = 1; m <= 4; ++m) {
      for (int trial = 0; trial < 50; ++trial) {
        const double tau = rng.uniform(0.1, 2.0);
        std::vector<std::vector<double>> z(2 * m, std::vector<double>(4));
        for (auto& row : z)
          for (double& v : row) v = rng.normal();
        const double ref = nt_xent_by_definition(z, tau);
        const double got = nt_xent(ContrastiveBatch(stack(z), tau));
        // The M=1 loss is exactly zero, so relative error is measured for M >= 2.
        if (m == 1) {
          m1 = std::max(m1, std::abs(got));
          continue;
        }
        worst = std::max(worst, std::abs(got - ref) / std::max(std::abs(ref), 1e-300));
      }
    }
    // M = 2 with orthonormal sample directions, both views identical, tau = 1.
    const std::vector<std::vector<double>> ortho{{1, 0}, {1, 0}, {0, 1}, {0, 1}};
    const double ortho_value = nt_xent(ContrastiveBatch(stack(ortho), 1.0));
    const bool ortho_ok = std::abs(ortho_value - 2.205780) < 1e-5;
    r.passed = worst < 1e-10 && m1 < 1e-9 && ortho_ok;
    r.detail = "M=2..4 max rel error " + fmt("%.2e", worst) + " (< 1e-10); M=1 max |loss| " + fmt("%.1e", m1) +
               "; orthonormal M=2 " + fmt("%.8f", ortho_value) + " (2.205780)";
  });
}

SuiteResult noise_law_suite() {
  return timed("noise-law suite", [](SuiteResult& r) {
    const std::size_t k = 6;
    const std::size_t n = 200000;
    std::vector<int> clean(n);
    for (std::size_t i = 0; i < n; ++i) clean[i] = static_cast<int>(i % k);

    std::vector<NoiseSpec> kinds(3);
    kinds[0].kind = NoiseKind::symmetric;
    kinds[1].kind = NoiseKind::asymmetric_map;
    kinds[1].mapping = {{0, 1}, {2, 3}, {3, 2}, {5, 4}};
    kinds[2].kind = NoiseKind::circular_group;
    kinds[2].group_size = 3;
    double worst = 0.0;
    std::uint64_t seed = 100;
    for (NoiseSpec spec : kinds) {
      for (double p : {0.2, 0.5, 0.8}) {
        spec.rate = p;
        spec.seed = seed++;
        const Corruption c = corrupt_labels(clean, spec, k);
        const TransitionMatrix emp = empirical_transition(clean, c.labels, k);
        worst = std::max(worst, emp.max_abs_diff(transition_matrix_of(spec, k)));
      }
    }
    NoiseSpec sym;
    sym.rate = 0.9;
    const TransitionMatrix t = transition_matrix_of(sym, 10);
    double diag_err = 0.0;
    for (std::size_t a = 0; a < 10; ++a) diag_err = std::max(diag_err, std::abs(t(a, a) - 0.19));
    r.passed = worst < 0.01 && diag_err < 1e-12;
    r.detail = "3 kinds x p in {0.2,0.5,0.8}, K=6, 200k labels: max entry error " + fmt("%.4f", worst) +
               " (< 0.01); symmetric p=0.9 K=10 diagonal error " + fmt("%.1e", diag_err);
  });
}

std::vector<SuiteResult> property_suites() {
  return {gradient_suite(), second_order_suite(), loss_limit_suite(), nt_xent_suite(), noise_law_suite()};
}

}  // namespace lab::checks
