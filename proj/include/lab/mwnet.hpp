#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lab/dataset.hpp"
#include "lab/losses.hpp"
#include "lab/model.hpp"
#include "lab/optim.hpp"
#include "lab/train.hpp"

namespace lab {

/// Weighting function: per-sample loss -> weight in (0, 1), realised as a
/// 1 -> H -> 1 network with relu hidden units and a sigmoid output.
struct WeightNet {
  DenseLayer hidden;
  DenseLayer output;

  std::size_t hidden_units() const { return hidden.out_dim(); }
  void validate() const;
};

WeightNet init_weight_net(std::size_t hidden, std::uint64_t seed);
WeightNet zero_weight_net(std::size_t hidden);

std::vector<Array> flatten(const WeightNet& net);
WeightNet unflatten(const WeightNet& like, std::span<const Array> values);

/// Tape forward: (B, 1) losses to (B, 1) weights; `net` is (hidden, output).
Var weight_net_forward(std::span<const BoundLayer> net, Var losses);
std::vector<double> sample_weights(const WeightNet& net, std::span<const double> losses);

struct MWNetConfig {
  TrainConfig train;
  /// Step size for the weight-net parameters.
  double meta_lr = 1e-3;
  std::size_t hidden = 100;
  /// Clean validation rows per meta step; 0 means train.batch_size.
  std::size_t val_batch_size = 0;
  LossSpec inner_loss = LossSpec::cce();
  std::uint64_t wnet_seed = 0;

  void validate() const;
};

/// Gradient of the clean validation loss after one virtual step
///   w' = w - alpha * grad_w mean_i(W(l_i; theta) * l_i)
/// with respect to theta. The per-sample losses fed to W are detached.
std::vector<Array> meta_gradient(const ClassifierParams& clf, const WeightNet& net,
                                 const LabeledDataset& train_batch, const LabeledDataset& val_batch,
                                 double alpha, const LossSpec& inner_loss = LossSpec::cce());

/// Gradient of mean_i(weights_i * l_i) with respect to the classifier
/// parameters, for fixed weights.
std::vector<Array> weighted_loss_gradient(const ClassifierParams& clf, const LabeledDataset& batch,
                                          std::span<const double> weights, const LossSpec& loss);

/// Per-sample losses of `batch` under `clf`.
std::vector<double> per_sample_loss(const ClassifierParams& clf, const LabeledDataset& batch,
                                    const LossSpec& loss);

struct MetaStepResult {
  ClassifierParams clf;
  WeightNet net;
  std::vector<Array> meta_grad;
  /// Weights from the updated weight net used for the real step.
  std::vector<double> weights;
  /// Unweighted mean inner loss of the batch before the step.
  double train_loss = 0.0;
};

/// One meta iteration: virtual step, weight-net update against the clean
/// batch, then the real classifier step with the updated weights.
MetaStepResult mwnet_meta_step(const ClassifierParams& clf, const WeightNet& net,
                               const LabeledDataset& train_batch, const LabeledDataset& val_batch,
                               const MWNetConfig& config, SGDState& state, std::size_t step,
                               std::size_t total_steps);

struct MWNetResult {
  ClassifierParams clf;
  WeightNet net;
  History history;
};

MWNetResult train_mwnet(const LabeledDataset& train, const LabeledDataset& val, const LabeledDataset& test,
                        ClassifierParams clf, const MWNetConfig& config);

}  // namespace lab
