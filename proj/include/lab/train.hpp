#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "lab/dataset.hpp"
#include "lab/losses.hpp"
#include "lab/model.hpp"
#include "lab/optim.hpp"

namespace lab {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = kNaN;  // mean minibatch loss during the epoch
  double val_acc = kNaN;
  double test_acc = kNaN;
  // Meta-reweighting only: mean weight given to flipped / clean train samples.
  double mean_weight_flipped = kNaN;
  double mean_weight_clean = kNaN;
};

struct History {
  /// Loss of the untouched model over the full training set.
  double initial_train_loss = kNaN;
  /// Same, measured with cross-entropy regardless of the training loss.
  double initial_cce = kNaN;
  std::vector<EpochRecord> epochs;
  /// First epoch with the highest validation accuracy.
  std::size_t best_val_epoch = 0;
  double best_val_test_acc = kNaN;

  void record(const EpochRecord& r);
  double final_test_acc() const { return epochs.empty() ? kNaN : epochs.back().test_acc; }
};

/// Fraction of rows whose argmax logit equals the label. Ties go to the
/// lowest class index.
double evaluate_accuracy(const ClassifierParams& clf, const LabeledDataset& data);

/// Mean per-sample loss over the whole dataset.
double mean_loss(const ClassifierParams& clf, const LabeledDataset& data, const LossSpec& loss);

/// Per-epoch sample order for a run seed.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

inline std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size) {
  return (n + batch_size - 1) / batch_size;
}

struct ErmResult {
  ClassifierParams clf;
  History history;
};

/// Minibatch SGD on the mean loss, fine-tuning every parameter.
ErmResult train_erm(const LabeledDataset& train, const LabeledDataset& val, const LabeledDataset& test,
                    ClassifierParams clf, const LossSpec& loss, const TrainConfig& config);

struct PretrainResult {
  EncoderParams encoder;
  /// Mean NT-Xent term per epoch.
  std::vector<double> epoch_loss;
  /// Summed NT-Xent of the very first batch, before any update.
  double first_batch_loss = kNaN;
};

/// Contrastive pretraining on unlabeled (N, D) samples. Each batch of M
/// samples becomes 2M augmented views; the encoder and projection head are
/// trained jointly and the head is discarded.
PretrainResult pretrain_contrastive(const Array& unlabeled, EncoderParams enc, ProjectionHeadParams ph,
                                    const AugmentationSpec& aug, double temperature,
                                    const TrainConfig& config);

}  // namespace lab
