#include <cmath>
#include <vector>

#include "doctest.h"
#include "lab/error.hpp"
#include "lab/gradcheck.hpp"
#include "lab/kernels.hpp"
#include "lab/losses.hpp"
#include "lab/random.hpp"
#include "lab/tape.hpp"

using namespace lab;

namespace {

Array random_array(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Array(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("elementwise and matrix primitives") {
  Tape t;
  Var a = t.leaf(Array::vector({2, 3}));
  Var b = t.leaf(Array::vector({4, 5}));
  CHECK(mul(a, b).value() == Array::vector({8, 15}));

  Var eye = t.constant(Array::matrix({{1, 0}, {0, 1}}));
  Var m = t.leaf(Array::matrix({{1.5, -2}, {0.25, 7}}));
  CHECK(matmul(eye, m).value() == m.value());

  CHECK(l2norm(t.leaf(Array::vector({3, 4}))).value().item() == doctest::Approx(5.0));
}

TEST_CASE("shape and domain errors") {
  Tape t;
  Var a = t.leaf(Array::vector({1, 2, 3}));
  Var b = t.leaf(Array::vector({1, 2}));
  CHECK_THROWS_AS(add(a, b), ShapeError);
  try {
    mul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("mul") != std::string::npos);
    CHECK(msg.find("[3]") != std::string::npos);
    CHECK(msg.find("[2]") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(t.leaf(Array::zeros({2, 3})), t.leaf(Array::zeros({2, 3}))), ShapeError);
  CHECK_THROWS_AS(log(t.leaf(Array::vector({1, 0}))), DomainError);
  CHECK_THROWS_AS(log(t.leaf(Array::vector({-1}))), DomainError);
  CHECK_THROWS_AS(pow(t.leaf(Array::vector({-1})), 0.5), DomainError);
  CHECK_THROWS_AS(t.leaf(Array::vector({1, std::nan("")})), DomainError);
  CHECK_THROWS_AS(t.leaf(Array::vector({INFINITY})), DomainError);
  CHECK_THROWS_AS(Array({2, 2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("first derivatives") {
  Tape t;
  Var x = t.leaf(Array::scalar(3.0));
  CHECK(t.backward(x * x, std::vector{x})[x].item() == doctest::Approx(6.0));

  Var y = t.leaf(Array::scalar(2.0));
  CHECK(t.backward(log(y), std::vector{y})[y].item() == doctest::Approx(0.5));
}

TEST_CASE("backward preconditions") {
  Tape t;
  Var v = t.leaf(Array::vector({1, 2}));
  CHECK_THROWS_AS(t.backward(v * v, std::vector{v}), ShapeError);

  Tape other;
  Var foreign = other.leaf(Array::scalar(1.0));
  CHECK_THROWS_AS(t.backward(sum(v), std::vector{foreign}), Error);
  CHECK_THROWS_AS(t.backward_as_graph(sum(v), std::vector{foreign}), Error);
}

TEST_CASE("unreached leaves receive zero gradients") {
  Tape t;
  Var a = t.leaf(Array::vector({1, 2}));
  Var b = t.leaf(Array::vector({5, 6, 7}));
  const auto g = t.backward(sum(a), std::vector{a, b});
  CHECK(g[b] == Array::zeros({3}));
}

TEST_CASE("sum(sigmoid(Wx)) matches central differences") {
  Rng rng(11);
  const Array w = random_array(rng, {3, 3});
  const Array x = random_array(rng, {3, 1});
  const ScalarFn f = [](Tape&, std::span<const Var> l) { return sum(sigmoid(matmul(l[0], l[1]))); };
  const std::vector<Array> leaves{w, x};
  CHECK(check_gradient(f, leaves, 1e-5) < 1e-6);
}

TEST_CASE("second derivatives through backward_as_graph") {
  {
    Tape t;
    Var x = t.leaf(Array::scalar(3.0));
    Var f = x * x * x;
    Var df = t.backward_as_graph(f, std::vector{x})[0];
    CHECK(df.value().item() == doctest::Approx(27.0));
    CHECK(t.backward(df, std::vector{x})[x].item() == doctest::Approx(18.0));
  }
  {
    Tape t;
    Var x = t.leaf(Array::scalar(0.0));
    Var df = t.backward_as_graph(exp(x), std::vector{x})[0];
    CHECK(t.backward(df, std::vector{x})[x].item() == doctest::Approx(1.0));
  }
}

TEST_CASE("Hessian-vector product of a two-layer network") {
  Rng rng(5);
  const Array w1 = random_array(rng, {3, 6});
  const Array w2 = random_array(rng, {6, 4});
  const Array x = random_array(rng, {5, 3}, -2, 2);
  const Array targets = one_hot(std::vector<int>{0, 3, 1, 2, 3}, 4);
  const Array v1 = random_array(rng, {3, 6});
  const Array v2 = random_array(rng, {6, 4});

  const auto loss = [&](Tape& t, Var a, Var b) {
    return mean(cce_rows(matmul(sigmoid(matmul(t.constant(x), a)), b), targets));
  };

  // Analytic: d/dw (grad(w) . v)
  Tape t;
  Var a = t.leaf(w1);
  Var b = t.leaf(w2);
  const auto g = t.backward_as_graph(loss(t, a, b), std::vector{a, b});
  Var gv = sum(g[0] * t.constant(v1)) + sum(g[1] * t.constant(v2));
  const auto hv = t.gradients(gv, std::vector{a, b});

  // Oracle: central difference of the first gradient along v.
  const double h = 1e-5;
  const auto grad_at = [&](double s) {
    Tape u;
    Var pa = u.leaf(kernels::add(w1, kernels::scale(v1, s)));
    Var pb = u.leaf(kernels::add(w2, kernels::scale(v2, s)));
    return u.gradients(loss(u, pa, pb), std::vector{pa, pb});
  };
  const auto hi = grad_at(h);
  const auto lo = grad_at(-h);
  double worst = 0.0;
  for (std::size_t p = 0; p < 2; ++p) {
    for (std::size_t i = 0; i < hv[p].size(); ++i) {
      const double fd = (hi[p][i] - lo[p][i]) / (2 * h);
      worst = std::max(worst, std::abs(hv[p][i] - fd) / std::max(1e-12, std::abs(fd)));
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("check_gradient on reference functions") {
  Rng rng(3);
  const std::vector<Array> x{random_array(rng, {4})};
  const Array c = random_array(rng, {4});
  const ScalarFn linear = [&](Tape& t, std::span<const Var> l) { return sum(l[0] * t.constant(c)); };
  CHECK(check_gradient(linear, x, 1e-5) < 1e-10);

  const ScalarFn constant = [](Tape& t, std::span<const Var>) { return t.constant(Array::scalar(2.5)); };
  CHECK(check_gradient(constant, x, 1e-5) == 0.0);

  const Array logits = random_array(rng, {1, 5}, -2, 2);
  const Array y = one_hot(std::vector<int>{2}, 5);
  const ScalarFn ce = [&](Tape&, std::span<const Var> l) { return sum(cce_rows(l[0], y)); };
  const std::vector<Array> leaves{logits};
  CHECK(check_gradient(ce, leaves, 1e-5) < 1e-6);

  // Closed form p - y.
  Tape t;
  Var l = t.leaf(logits);
  const Array g = t.gradients(sum(cce_rows(l, y)), std::vector{l})[0];
  const ProbVector p = softmax(logits.data());
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(g[k] == doctest::Approx(p[k] - y[k]).epsilon(1e-12));
  }
}

TEST_CASE("double-backward values agree with eager backward") {
  Rng rng(9);
  const Array w = random_array(rng, {4, 3});
  const Array x = random_array(rng, {6, 4});
  Tape t;
  Var lw = t.leaf(w);
  Var out = sum(relu(matmul(t.constant(x), lw)) * relu(matmul(t.constant(x), lw)));
  const Array eager = t.gradients(out, std::vector{lw})[0];
  const Array graph = t.backward_as_graph(out, std::vector{lw})[0].value();
  for (std::size_t i = 0; i < eager.size(); ++i) CHECK(eager[i] == doctest::Approx(graph[i]).epsilon(1e-14));
}

TEST_CASE("tape is deterministic and topologically ordered") {
  const auto build = [](Tape& t) {
    Var a = t.leaf(Array::matrix({{0.3, -1.2}, {2.0, 0.7}}));
    Var b = exp(matmul(a, transpose(a))) * 0.1;
    Var parts[] = {b, a};
    Var c = concat(parts, 1);
    Var s = sum(pow(l2norm(c), 1.5)) + sum(sigmoid(slice(c, 1, 1, 2)));
    const auto g = t.backward_as_graph(s, std::vector{a});
    return sum(g[0] * g[0]);
  };
  Tape t1, t2;
  const Var r1 = build(t1);
  const Var r2 = build(t2);
  CHECK(r1.value() == r2.value());
  CHECK(t1.size() == t2.size());
  for (std::size_t i = 0; i < t1.size(); ++i) {
    for (std::size_t p : t1.node(i).parents) CHECK(p < i);
  }
}

TEST_CASE("slice, embed, concat, broadcast and reshape gradients") {
  Rng rng(21);
  const std::vector<Array> leaves{random_array(rng, {3, 4}), random_array(rng, {3, 2}),
                                  random_array(rng, {1})};
  const Array w = random_array(rng, {3, 6}, 0.5, 1.5);
  const ScalarFn f = [&](Tape& t, std::span<const Var> l) {
    Var parts[] = {l[0], l[1]};
    Var c = concat(parts, 1);
    Var s = slice(c, 1, 1, 4);
    Var e = embed(s, {3, 6}, 1, 2);
    Var bc = broadcast(l[2], {3, 6});
    Var r = reshape(e * bc + c, {6, 3});
    return sum(reshape(r, {3, 6}) * t.constant(w));
  };
  CHECK(check_gradient(f, leaves, 1e-5) < 1e-6);
}
