#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "lab/error.hpp"
#include "lab/noise.hpp"

using namespace lab;

namespace {

std::vector<int> balanced_labels(std::size_t n, std::size_t k) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % k);
  return y;
}

NoiseSpec make(NoiseKind kind, double rate, std::uint64_t seed = 42) {
  NoiseSpec s;
  s.kind = kind;
  s.rate = rate;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("symmetric transition matrix") {
  const TransitionMatrix t = transition_matrix_of(make(NoiseKind::symmetric, 0.9), 10);
  for (std::size_t a = 0; a < 10; ++a) {
    for (std::size_t b = 0; b < 10; ++b) {
      CHECK(t(a, b) == doctest::Approx(a == b ? 0.19 : 0.09).epsilon(1e-12));
    }
  }
  CHECK(t.row_sum_error() < 1e-12);
}

TEST_CASE("asymmetric map transition matrix") {
  NoiseSpec s = make(NoiseKind::asymmetric_map, 0.4);
  s.mapping = cifar10_asymmetric_pairs();
  const TransitionMatrix t = transition_matrix_of(s, 10);
  const std::size_t truck = 9, automobile = 1, cat = 3, dog = 5, airplane = 0;
  CHECK(t(truck, automobile) == doctest::Approx(0.4));
  CHECK(t(truck, truck) == doctest::Approx(0.6));
  CHECK(t(cat, dog) == doctest::Approx(0.4));
  CHECK(t(dog, cat) == doctest::Approx(0.4));
  CHECK(t(airplane, airplane) == 1.0);
  CHECK(t.row_sum_error() < 1e-12);

  s.mapping = {{3, 12}};
  CHECK_THROWS_AS(transition_matrix_of(s, 10), ConfigError);
}

TEST_CASE("circular group mapping") {
  CHECK(circular_next(4, 5) == 0);
  CHECK(circular_next(7, 5) == 8);
  // Every group of five forms a single cycle; applying the map s times is the
  // identity.
  for (std::size_t g = 0; g < 20; ++g) {
    std::set<std::size_t> seen;
    std::size_t c = g * 5;
    for (int step = 0; step < 5; ++step) {
      seen.insert(c);
      CHECK(c / 5 == g);
      c = circular_next(c, 5);
    }
    CHECK(seen.size() == 5);
    CHECK(c == g * 5);
  }
  NoiseSpec s = make(NoiseKind::circular_group, 0.3);
  s.group_size = 5;
  const TransitionMatrix t = transition_matrix_of(s, 100);
  CHECK(t(4, 0) == doctest::Approx(0.3));
  CHECK(t(7, 8) == doctest::Approx(0.3));
  CHECK(t(7, 7) == doctest::Approx(0.7));
  s.group_size = 7;
  CHECK_THROWS_AS(transition_matrix_of(s, 100), ConfigError);
}

TEST_CASE("rate bounds") {
  CHECK_THROWS_AS(transition_matrix_of(make(NoiseKind::symmetric, 1.5), 4), ConfigError);
  CHECK_THROWS_AS(transition_matrix_of(make(NoiseKind::symmetric, -0.1), 4), ConfigError);
}

TEST_CASE("corrupt_labels contracts") {
  const auto y = balanced_labels(1000, 10);
  const Corruption none = corrupt_labels(y, make(NoiseKind::symmetric, 0.0), 10);
  CHECK(none.labels == y);
  CHECK(std::accumulate(none.flipped.begin(), none.flipped.end(), 0) == 0);

  const auto a = corrupt_labels(y, make(NoiseKind::symmetric, 0.6, 7), 10);
  const auto b = corrupt_labels(y, make(NoiseKind::symmetric, 0.6, 7), 10);
  CHECK(a.labels == b.labels);
  CHECK(a.flipped == b.flipped);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK((a.flipped[i] != 0) == (a.labels[i] != y[i]));

  // Order independence: corrupting a prefix gives the prefix of the result.
  const auto prefix = corrupt_labels(std::span<const int>(y).first(100),
                                     make(NoiseKind::symmetric, 0.6, 7), 10);
  CHECK(std::equal(prefix.labels.begin(), prefix.labels.end(), a.labels.begin()));

  CHECK_THROWS_AS(corrupt_labels(std::vector<int>{0, 10}, make(NoiseKind::symmetric, 0.5), 10),
                  ConfigError);
  CHECK_THROWS_AS(corrupt_labels(std::vector<int>{-1}, make(NoiseKind::symmetric, 0.5), 10),
                  ConfigError);
}

TEST_CASE("symmetric rate 1 is uniform over classes") {
  const auto y = balanced_labels(100000, 10);
  const auto c = corrupt_labels(y, make(NoiseKind::symmetric, 1.0, 3), 10);
  std::vector<double> freq(10, 0.0);
  for (int v : c.labels) freq[static_cast<std::size_t>(v)] += 1.0 / 100000.0;
  for (double f : freq) CHECK(f == doctest::Approx(0.1).epsilon(0.1));
}

TEST_CASE("empirical transition") {
  const auto y = balanced_labels(40, 4);
  CHECK(empirical_transition(y, y, 4).max_abs_diff(TransitionMatrix::identity(4)) == 0.0);

  const std::vector<int> single(5, 0);
  const auto t1 = empirical_transition(single, single, 1);
  CHECK(t1(0, 0) == 1.0);

  try {
    empirical_transition(std::vector<int>{0, 0, 2}, std::vector<int>{0, 0, 2}, 4);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("1, 3") != std::string::npos);
  }

  const auto big = balanced_labels(200000, 4);
  const NoiseSpec s = make(NoiseKind::symmetric, 0.5, 99);
  const auto c = corrupt_labels(big, s, 4);
  CHECK(empirical_transition(big, c.labels, 4).max_abs_diff(transition_matrix_of(s, 4)) < 0.01);
}

TEST_CASE("empirical law across kinds and rates") {
  const std::size_t k = 6;
  const auto y = balanced_labels(200000, k);
  for (double p : {0.2, 0.5, 0.8}) {
    NoiseSpec sym = make(NoiseKind::symmetric, p, 1);
    NoiseSpec asym = make(NoiseKind::asymmetric_map, p, 2);
    asym.mapping = {{0, 1}, {2, 3}, {3, 2}, {5, 4}};
    NoiseSpec circ = make(NoiseKind::circular_group, p, 3);
    circ.group_size = 3;
    for (const NoiseSpec& s : {sym, asym, circ}) {
      const auto c = corrupt_labels(y, s, k);
      const auto nominal = transition_matrix_of(s, k);
      CHECK(nominal.row_sum_error() < 1e-12);
      CHECK(empirical_transition(y, c.labels, k).max_abs_diff(nominal) < 0.01);
    }
  }
}
