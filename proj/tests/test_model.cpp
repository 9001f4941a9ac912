#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "lab/checkpoint.hpp"
#include "lab/error.hpp"
#include "lab/gradcheck.hpp"
#include "lab/losses.hpp"
#include "lab/model.hpp"
#include "lab/random.hpp"

using namespace lab;

namespace {

Array random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1, double hi = 1) {
  std::vector<double> v(r * c);
  for (double& x : v) x = rng.uniform(lo, hi);
  return Array({r, c}, std::move(v));
}

}  // namespace

TEST_CASE("Glorot init bounds, zero biases, determinism") {
  const std::vector<std::size_t> sizes{4, 8};
  const EncoderParams a = init_encoder(sizes, 17);
  const EncoderParams b = init_encoder(sizes, 17);
  const double bound = std::sqrt(6.0 / 12.0);
  CHECK(bound == doctest::Approx(0.7071).epsilon(1e-4));
  for (double w : a.layers[0].weight.data()) CHECK(std::abs(w) <= bound);
  for (double v : a.layers[0].bias.data()) CHECK(v == 0.0);
  CHECK(a.layers[0].weight == b.layers[0].weight);
  CHECK_FALSE(a.layers[0].weight == init_encoder(sizes, 18).layers[0].weight);

  CHECK_THROWS_AS(init_encoder(std::vector<std::size_t>{4}, 1), ConfigError);
  CHECK_THROWS_AS(init_encoder(std::vector<std::size_t>{4, 0}, 1), ConfigError);
}

TEST_CASE("zero-head classifier predicts uniformly") {
  Rng rng(1);
  const EncoderParams enc = init_encoder(std::vector<std::size_t>{5, 7, 6}, 3);
  const ClassifierParams clf = init_classifier_from_encoder(enc, 3);
  CHECK(clf.encoder.layers[1].weight == enc.layers[1].weight);
  CHECK(clf.head.weight == Array::zeros({6, 3}));
  CHECK(clf.head.bias == Array::zeros({1, 3}));

  const Array x = random_matrix(rng, 10, 5, -3, 3);
  const Array logits = predict_logits(clf, x);
  for (double v : logits.data()) CHECK(v == 0.0);
  for (std::size_t i = 0; i < 10; ++i) {
    const ProbVector p = softmax(logits.data().subspan(i * 3, 3));
    for (std::size_t k = 0; k < 3; ++k) CHECK(p[k] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(cce(p, std::vector<double>{0, 1, 0}) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(init_classifier_from_encoder(enc, 1), ConfigError);
}

TEST_CASE("forward passes") {
  EncoderParams ident;
  ident.layers.push_back({Array::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}), Array::zeros({1, 3})});
  const Array x = Array::matrix({{0.5, 2, 0}, {3, 0.25, 1}});
  CHECK(encode(ident, x) == x);

  const EncoderParams enc = init_encoder(std::vector<std::size_t>{3, 4, 2}, 9);
  const Array h = encode(enc, Array::zeros({2, 3}));
  for (double v : h.data()) CHECK(v == 0.0);

  // Hand calculation: W1 = [[1,-1],[2,0.5]], b1 = [0.5,-1]; W2 = [[1,2],[-1,1]], b2 = [0,1].
  // x = [1, 2]: pre1 = [1+4+0.5, -1+1-1] = [5.5, -1] -> relu [5.5, 0]
  // logits = [5.5, 11] + [0, 1] = [5.5, 12]
  ClassifierParams clf;
  clf.encoder.layers.push_back({Array::matrix({{1, -1}, {2, 0.5}}), Array::matrix({{0.5, -1}})});
  clf.head = {Array::matrix({{1, 2}, {-1, 1}}), Array::matrix({{0, 1}})};
  const Array logits = predict_logits(clf, Array::matrix({{1, 2}}));
  CHECK(logits.at(0, 0) == doctest::Approx(5.5));
  CHECK(logits.at(0, 1) == doctest::Approx(12.0));

  CHECK_THROWS_AS(predict_logits(clf, Array::matrix({{1, 2, 3}})), ShapeError);

  ProjectionHeadParams ph = init_projection_head(2, 5, 3, 4);
  CHECK(project(ph, Array::matrix({{1, 2}})).shape() == Shape{1, 3});
  ph.layers.pop_back();
  CHECK_THROWS_AS(ph.validate(), ShapeError);
}

TEST_CASE("gradients of predict_logits w.r.t. every parameter") {
  Rng rng(2);
  ClassifierParams clf = init_classifier_from_encoder(init_encoder(std::vector<std::size_t>{3, 6, 5}, 2), 4);
  clf.head = glorot_layer(5, 4, 77);
  std::vector<Array> params = flatten(clf);
  for (Array& p : params) {  // non-zero biases so that every entry is exercised
    if (p.dim(0) == 1) p = random_matrix(rng, 1, p.dim(1), 0.1, 0.5);
  }
  const Array x = random_matrix(rng, 7, 3, -2, 2);
  const Array w = random_matrix(rng, 7, 4, 0.5, 1.5);
  const ScalarFn f = [&](Tape& t, std::span<const Var> l) {
    BoundClassifier b;
    for (std::size_t i = 0; i + 2 < l.size(); i += 2) b.encoder.push_back({l[i], l[i + 1]});
    b.head = {l[l.size() - 2], l.back()};
    return sum(predict_logits(b, t.constant(x)) * t.constant(w));
  };
  CHECK(check_gradient(f, params, 1e-5) < 1e-6);
}

TEST_CASE("make_views") {
  const std::vector<double> x{1.0, -2.0, 0.5};
  const std::vector<double> sd{1.0, 2.0, 0.5};
  const auto [a, b] = make_views(x, AugmentationSpec{0.0, 0.0, 5}, sd, 3);
  CHECK(a == x);
  CHECK(b == x);

  CHECK_THROWS_AS(make_views(x, AugmentationSpec{0.1, 1.0, 5}, sd, 0), ConfigError);
  CHECK_THROWS_AS(make_views(x, AugmentationSpec{0.1, 0.1, 5}, std::vector<double>{1, 0, 1}, 0),
                  DomainError);

  const AugmentationSpec aug{0.5, 0.2, 11};
  const auto r1 = make_views(x, aug, sd, 7);
  const auto r2 = make_views(x, aug, sd, 7);
  CHECK(r1 == r2);
  CHECK(r1.first != r1.second);
  CHECK(make_views(x, aug, sd, 8) != r1);

  std::size_t zeros = 0, total = 0;
  for (std::uint64_t i = 0; i < 50000; ++i) {
    const auto [v0, v1] = make_views(x, aug, sd, i);
    for (double v : v0) zeros += v == 0.0;
    for (double v : v1) zeros += v == 0.0;
    total += 6;
  }
  CHECK(std::abs(static_cast<double>(zeros) / static_cast<double>(total) - 0.2) < 0.01);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const auto dir = std::filesystem::temp_directory_path() / "lab_ckpt_test";
  std::filesystem::create_directories(dir);
  ClassifierParams clf = init_classifier_from_encoder(init_encoder(std::vector<std::size_t>{3, 4, 2}, 5), 3);
  clf.head = glorot_layer(2, 3, 8);
  const auto tensors = named_tensors(clf);
  write_checkpoint(dir / "clf.json", tensors, {{"note", "unit"}});
  const Checkpoint back = read_checkpoint(dir / "clf.json");
  REQUIRE(back.tensors.size() == tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    CHECK(back.tensors[i].name == tensors[i].name);
    CHECK(back.tensors[i].value == tensors[i].value);
  }
  CHECK(back.meta.at("note") == "unit");
  const EncoderParams enc = encoder_from_tensors(back.tensors);
  CHECK(enc.layers.size() == 2);
  CHECK(enc.layers[1].weight == clf.encoder.layers[1].weight);

  // Payload layout: little-endian float64 at the manifest's offsets.
  std::ifstream bin(dir / "clf.json.bin", std::ios::binary);
  const std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  std::size_t expected = 0;
  for (const auto& t : tensors) expected += t.value.size() * 8;
  CHECK(bytes.size() == expected);

  CHECK_THROWS_AS(read_checkpoint(dir / "missing.json"), ConfigError);
  std::filesystem::remove_all(dir);
}
