#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lab/array.hpp"
#include "lab/tape.hpp"

namespace lab {

/// y = x W + b with W of shape (in, out) and b of shape (1, out).
struct DenseLayer {
  Array weight;
  Array bias;

  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }
};

/// Glorot-uniform weights, zero bias.
DenseLayer glorot_layer(std::size_t in, std::size_t out, std::uint64_t seed);
DenseLayer zero_layer(std::size_t in, std::size_t out);

/// Base encoder: dense layers, each followed by relu.
struct EncoderParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.back().out_dim(); }
  void validate() const;
};

/// Two dense layers with relu between; linear output of dimension d_z.
struct ProjectionHeadParams {
  std::vector<DenseLayer> layers;

  std::size_t output_dim() const { return layers.back().out_dim(); }
  void validate() const;
};

/// Encoder followed by a dense head producing K logits.
struct ClassifierParams {
  EncoderParams encoder;
  DenseLayer head;

  std::size_t num_classes() const { return head.out_dim(); }
  void validate() const;
};

struct AugmentationSpec {
  double jitter_sigma = 0.0;  // in units of per-feature std
  double mask_prob = 0.0;     // in [0, 1)
  std::uint64_t seed = 0;

  void validate() const;
};

// Construction ----------------------------------------------------------------

EncoderParams init_encoder(std::span<const std::size_t> sizes, std::uint64_t seed);
ProjectionHeadParams init_projection_head(std::size_t in, std::size_t hidden, std::size_t out,
                                          std::uint64_t seed);
/// Copies the encoder and attaches an all-zero head, so initial predictions
/// are uniform over the K classes.
ClassifierParams init_classifier_from_encoder(const EncoderParams& encoder, std::size_t num_classes);

// Flat parameter views (weight, bias per layer, in layer order) ----------------

std::vector<Array> flatten(std::span<const DenseLayer> layers);
std::vector<DenseLayer> unflatten(std::span<const DenseLayer> like, std::span<const Array> values);
std::vector<Array> flatten(const ClassifierParams& clf);
ClassifierParams unflatten(const ClassifierParams& like, std::span<const Array> values);
std::vector<std::string> parameter_names(const std::string& prefix, std::size_t layer_count);

// Tape forward passes ---------------------------------------------------------

struct BoundLayer {
  Var weight;
  Var bias;
};

/// Places the layer parameters on `tape` as leaves (or constants).
std::vector<BoundLayer> bind_layers(Tape& tape, std::span<const DenseLayer> layers, bool as_leaves = true);
std::vector<Var> leaves_of(std::span<const BoundLayer> layers);

Var dense(const BoundLayer& layer, Var x);
/// Dense stack with relu after every layer, or after all but the last.
Var mlp(std::span<const BoundLayer> layers, Var x, bool relu_last);

struct BoundClassifier {
  std::vector<BoundLayer> encoder;
  BoundLayer head;

  std::vector<Var> leaves() const;
};

BoundClassifier bind_classifier(Tape& tape, const ClassifierParams& clf, bool as_leaves = true);
/// Regroups a flat (weight, bias, ...) list into encoder layers plus a head.
BoundClassifier classifier_from_vars(std::span<const Var> flat);
Var predict_logits(const BoundClassifier& clf, Var x);

// Eager forward passes on (N, D) inputs ---------------------------------------

Array encode(const EncoderParams& enc, const Array& x);
Array project(const ProjectionHeadParams& head, const Array& h);
/// Raw logits; no softmax.
Array predict_logits(const ClassifierParams& clf, const Array& x);

// Augmentation ----------------------------------------------------------------

/// Two independently perturbed copies of `sample`: Gaussian jitter scaled by
/// jitter_sigma * feature_std, then each coordinate zeroed with probability
/// mask_prob. Deterministic in (aug.seed, sample_index, view index).
std::pair<std::vector<double>, std::vector<double>> make_views(std::span<const double> sample,
                                                             const AugmentationSpec& aug,
                                                             std::span<const double> feature_std,
                                                             std::uint64_t sample_index);

/// Per-column standard deviation of an (N, D) array, floored at 1e-12.
std::vector<double> column_std(const Array& x);

}  // namespace lab
