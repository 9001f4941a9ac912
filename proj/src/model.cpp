#include "lab/model.hpp"

#include <algorithm>
#include <cmath>

#include "lab/error.hpp"
#include "lab/random.hpp"

namespace lab {

DenseLayer glorot_layer(std::size_t in, std::size_t out, std::uint64_t seed) {
  if (in == 0 || out == 0) throw ConfigError("layer sizes must be positive");
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  Rng rng(seed);
  std::vector<double> w(in * out);
  for (double& v : w) v = rng.uniform(-bound, bound);
  return {Array({in, out}, std::move(w)), Array::zeros({1, out})};
}

DenseLayer zero_layer(std::size_t in, std::size_t out) {
  return {Array::zeros({in, out}), Array::zeros({1, out})};
}

namespace {

void validate_chain(std::span<const DenseLayer> layers, const char* what) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const DenseLayer& l = layers[i];
    if (l.weight.rank() != 2 || l.bias.shape() != Shape{1, l.weight.dim(1)}) {
      throw ShapeError(std::string(what) + ": layer " + std::to_string(i) + " has weight " +
                       shape_str(l.weight.shape()) + " and bias " + shape_str(l.bias.shape()));
    }
    if (i > 0 && layers[i - 1].out_dim() != l.in_dim()) {
      throw ShapeError(std::string(what) + ": layer " + std::to_string(i) + " expects " +
                       std::to_string(l.in_dim()) + " inputs, previous layer gives " +
                       std::to_string(layers[i - 1].out_dim()));
    }
    if (!l.weight.all_finite() || !l.bias.all_finite()) {
      throw DomainError(std::string(what) + ": non-finite parameters in layer " + std::to_string(i));
    }
  }
}

}  // namespace

void EncoderParams::validate() const {
  if (layers.empty()) throw ShapeError("encoder needs at least one layer");
  validate_chain(layers, "encoder");
}

void ProjectionHeadParams::validate() const {
  if (layers.size() != 2) throw ShapeError("projection head must have exactly two layers");
  validate_chain(layers, "projection head");
}

void ClassifierParams::validate() const {
  encoder.validate();
  const DenseLayer both[] = {encoder.layers.back(), head};
  validate_chain(both, "classifier head");
  if (num_classes() < 2) throw ShapeError("classifier needs at least two classes");
}

void AugmentationSpec::validate() const {
  if (!(jitter_sigma >= 0.0)) throw ConfigError("augmentation: jitter_sigma must be >= 0");
  if (!(mask_prob >= 0.0 && mask_prob < 1.0)) {
    throw ConfigError("augmentation: mask_prob must lie in [0, 1)");
  }
}

EncoderParams init_encoder(std::span<const std::size_t> sizes, std::uint64_t seed) {
  if (sizes.size() < 2) throw ConfigError("encoder needs at least two layer sizes");
  EncoderParams enc;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    enc.layers.push_back(glorot_layer(sizes[i], sizes[i + 1], derive_seed(seed, {0xE7C0, i})));
  }
  return enc;
}

ProjectionHeadParams init_projection_head(std::size_t in, std::size_t hidden, std::size_t out,
                                          std::uint64_t seed) {
  ProjectionHeadParams ph;
  ph.layers.push_back(glorot_layer(in, hidden, derive_seed(seed, {0x9E4D, 0})));
  ph.layers.push_back(glorot_layer(hidden, out, derive_seed(seed, {0x9E4D, 1})));
  return ph;
}

ClassifierParams init_classifier_from_encoder(const EncoderParams& encoder, std::size_t num_classes) {
  encoder.validate();
  if (num_classes < 2) throw ConfigError("classifier needs at least two classes");
  return {encoder, zero_layer(encoder.output_dim(), num_classes)};
}

std::vector<Array> flatten(std::span<const DenseLayer> layers) {
  std::vector<Array> out;
  out.reserve(2 * layers.size());
  for (const DenseLayer& l : layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

std::vector<DenseLayer> unflatten(std::span<const DenseLayer> like, std::span<const Array> values) {
  if (values.size() != 2 * like.size()) {
    throw ShapeError("unflatten: expected " + std::to_string(2 * like.size()) + " arrays, got " +
                     std::to_string(values.size()));
  }
  std::vector<DenseLayer> out;
  out.reserve(like.size());
  for (std::size_t i = 0; i < like.size(); ++i) {
    const Array& w = values[2 * i];
    const Array& b = values[2 * i + 1];
    if (w.shape() != like[i].weight.shape() || b.shape() != like[i].bias.shape()) {
      throw ShapeError("unflatten: layer " + std::to_string(i) + " shape mismatch");
    }
    out.push_back({w, b});
  }
  return out;
}

std::vector<Array> flatten(const ClassifierParams& clf) {
  std::vector<Array> out = flatten(clf.encoder.layers);
  out.push_back(clf.head.weight);
  out.push_back(clf.head.bias);
  return out;
}

ClassifierParams unflatten(const ClassifierParams& like, std::span<const Array> values) {
  const std::size_t n = 2 * like.encoder.layers.size();
  if (values.size() != n + 2) throw ShapeError("unflatten: classifier parameter count mismatch");
  ClassifierParams out;
  out.encoder.layers = unflatten(like.encoder.layers, values.first(n));
  const DenseLayer head[] = {like.head};
  out.head = unflatten(head, values.subspan(n))[0];
  return out;
}

std::vector<std::string> parameter_names(const std::string& prefix, std::size_t layer_count) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < layer_count; ++i) {
    names.push_back(prefix + "." + std::to_string(i) + ".weight");
    names.push_back(prefix + "." + std::to_string(i) + ".bias");
  }
  return names;
}

std::vector<BoundLayer> bind_layers(Tape& tape, std::span<const DenseLayer> layers, bool as_leaves) {
  std::vector<BoundLayer> out;
  out.reserve(layers.size());
  for (const DenseLayer& l : layers) {
    if (as_leaves) {
      out.push_back({tape.leaf(l.weight), tape.leaf(l.bias)});
    } else {
      out.push_back({tape.constant(l.weight), tape.constant(l.bias)});
    }
  }
  return out;
}

std::vector<Var> leaves_of(std::span<const BoundLayer> layers) {
  std::vector<Var> out;
  out.reserve(2 * layers.size());
  for (const BoundLayer& l : layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

Var dense(const BoundLayer& layer, Var x) {
  const Shape xs = x.shape();
  if (xs.size() != 2 || xs[1] != layer.weight.shape()[0]) {
    throw ShapeError("dense: input " + shape_str(xs) + " does not match weight " +
                     shape_str(layer.weight.shape()));
  }
  Var ones = x.tape()->constant(Array::full({xs[0], 1}, 1.0));
  return matmul(x, layer.weight) + matmul(ones, layer.bias);
}

Var mlp(std::span<const BoundLayer> layers, Var x, bool relu_last) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = dense(layers[i], x);
    if (relu_last || i + 1 < layers.size()) x = relu(x);
  }
  return x;
}

std::vector<Var> BoundClassifier::leaves() const {
  std::vector<Var> out = leaves_of(encoder);
  out.push_back(head.weight);
  out.push_back(head.bias);
  return out;
}

BoundClassifier bind_classifier(Tape& tape, const ClassifierParams& clf, bool as_leaves) {
  BoundClassifier out;
  out.encoder = bind_layers(tape, clf.encoder.layers, as_leaves);
  const DenseLayer head[] = {clf.head};
  out.head = bind_layers(tape, head, as_leaves)[0];
  return out;
}

BoundClassifier classifier_from_vars(std::span<const Var> flat) {
  if (flat.size() < 4 || flat.size() % 2 != 0) {
    throw ShapeError("classifier_from_vars: expected an even count >= 4, got " +
                     std::to_string(flat.size()));
  }
  BoundClassifier out;
  for (std::size_t i = 0; i + 2 < flat.size(); i += 2) out.encoder.push_back({flat[i], flat[i + 1]});
  out.head = {flat[flat.size() - 2], flat.back()};
  return out;
}

Var predict_logits(const BoundClassifier& clf, Var x) {
  return dense(clf.head, mlp(clf.encoder, x, /*relu_last=*/true));
}

Array encode(const EncoderParams& enc, const Array& x) {
  Tape tape;
  const auto layers = bind_layers(tape, enc.layers, false);
  return mlp(layers, tape.constant(x), true).value();
}

Array project(const ProjectionHeadParams& head, const Array& h) {
  Tape tape;
  const auto layers = bind_layers(tape, head.layers, false);
  return mlp(layers, tape.constant(h), false).value();
}

Array predict_logits(const ClassifierParams& clf, const Array& x) {
  Tape tape;
  const BoundClassifier bound = bind_classifier(tape, clf, false);
  return predict_logits(bound, tape.constant(x)).value();
}

std::pair<std::vector<double>, std::vector<double>> make_views(std::span<const double> sample,
                                                             const AugmentationSpec& aug,
                                                             std::span<const double> feature_std,
                                                             std::uint64_t sample_index) {
  aug.validate();
  if (feature_std.size() != sample.size()) {
    throw ShapeError("make_views: feature_std length differs from sample length");
  }
  for (double s : feature_std) {
    if (!(s > 0.0)) throw DomainError("make_views: feature_std entries must be positive");
  }
  const auto view = [&](std::uint64_t which) {
    Rng rng(derive_seed(aug.seed, {sample_index, which}));
    std::vector<double> v(sample.size());
    for (std::size_t d = 0; d < v.size(); ++d) {
      const double noise = rng.normal();
      const double u = rng.uniform();
      v[d] = u < aug.mask_prob ? 0.0 : sample[d] + aug.jitter_sigma * feature_std[d] * noise;
    }
    return v;
  };
  return {view(0), view(1)};
}

std::vector<double> column_std(const Array& x) {
  if (x.rank() != 2 || x.dim(0) == 0) throw ShapeError("column_std: expected nonempty (N, D)");
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x.at(i, j);
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) var[j] += (x.at(i, j) - mean[j]) * (x.at(i, j) - mean[j]);
  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j) {
    out[j] = std::max(1e-12, std::sqrt(var[j] / static_cast<double>(n)));
  }
  return out;
}

}  // namespace lab
