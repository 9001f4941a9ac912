#include "lab/train.hpp"

#include <algorithm>
#include <cmath>

#include "lab/error.hpp"
#include "lab/random.hpp"

namespace lab {

void History::record(const EpochRecord& r) {
  if (epochs.empty() || r.val_acc > epochs[best_val_epoch].val_acc) {
    best_val_epoch = epochs.size();
    best_val_test_acc = r.test_acc;
  }
  epochs.push_back(r);
}

namespace {

constexpr std::size_t kEvalChunk = 512;

void require_nonempty(const LabeledDataset& data, const char* what) {
  if (data.empty()) throw ConfigError(std::string(what) + ": empty dataset");
}

std::vector<std::size_t> iota_range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> r(end - begin);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = begin + i;
  return r;
}

std::string where(std::size_t epoch, std::size_t batch) {
  return "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch);
}

bool all_finite(std::span<const Array> arrays) {
  return std::all_of(arrays.begin(), arrays.end(), [](const Array& a) { return a.all_finite(); });
}

}  // namespace

double evaluate_accuracy(const ClassifierParams& clf, const LabeledDataset& data) {
  require_nonempty(data, "evaluate_accuracy");
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += kEvalChunk) {
    const auto rows = iota_range(begin, std::min(data.size(), begin + kEvalChunk));
    const Array logits = predict_logits(clf, take_rows(data.x, rows));
    const std::size_t k = logits.dim(1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c) {
        if (logits.at(i, c) > logits.at(i, best)) best = c;
      }
      correct += static_cast<int>(best) == data.labels[rows[i]];
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double mean_loss(const ClassifierParams& clf, const LabeledDataset& data, const LossSpec& loss) {
  require_nonempty(data, "mean_loss");
  double total = 0.0;
  for (std::size_t begin = 0; begin < data.size(); begin += kEvalChunk) {
    const auto rows = iota_range(begin, std::min(data.size(), begin + kEvalChunk));
    const LabeledDataset part = data.subset(rows);
    Tape tape;
    const Var logits = tape.constant(predict_logits(clf, part.x));
    total += sum(loss_rows(loss, logits, part.targets())).value().item();
  }
  return total / static_cast<double>(data.size());
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  Rng rng(derive_seed(seed, {0xB47C, epoch}));
  return rng.permutation(n);
}

ErmResult train_erm(const LabeledDataset& train, const LabeledDataset& val, const LabeledDataset& test,
                    ClassifierParams clf, const LossSpec& loss, const TrainConfig& config) {
  require_nonempty(train, "train_erm");
  require_nonempty(val, "train_erm validation");
  require_nonempty(test, "train_erm test");
  config.validate();
  loss.validate();
  clf.validate();
  if (train.dim() != clf.encoder.input_dim() || val.dim() != train.dim() || test.dim() != train.dim()) {
    throw ShapeError("train_erm: feature dimensions differ between datasets and model");
  }
  if (train.num_classes != clf.num_classes() || val.num_classes != train.num_classes ||
      test.num_classes != train.num_classes) {
    throw ShapeError("train_erm: class counts differ between datasets and model");
  }

  ErmResult out;
  out.history.initial_train_loss = mean_loss(clf, train, loss);
  out.history.initial_cce = mean_loss(clf, train, LossSpec::cce());

  const std::size_t per_epoch = batches_per_epoch(train.size(), config.batch_size);
  const std::size_t total_steps = config.epochs * per_epoch;
  std::vector<Array> params = flatten(clf);
  SGDState state = SGDState::zeros_like(params);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(train.size(), config.seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(train.size(), begin + config.batch_size);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      const LabeledDataset batch = train.subset(rows);

      Tape tape;
      const BoundClassifier bound = bind_classifier(tape, clf, true);
      Var objective;
      try {
        const Var logits = predict_logits(bound, tape.constant(batch.x));
        objective = mean(loss_rows(loss, logits, batch.targets()));
      } catch (const DomainError& e) {
        throw TrainingError("train_erm: " + std::string(e.what()) + " at " + where(epoch, b));
      }
      const double value = objective.value().item();
      if (!std::isfinite(value)) {
        throw TrainingError("train_erm: non-finite loss at " + where(epoch, b));
      }
      const auto grads = tape.gradients(objective, bound.leaves());
      if (!all_finite(grads)) {
        throw TrainingError("train_erm: non-finite gradient at " + where(epoch, b));
      }
      sgd_step(params, grads, state, config, step++, total_steps);
      if (!all_finite(params)) {
        throw TrainingError("train_erm: parameters overflowed after update at " + where(epoch, b));
      }
      clf = unflatten(clf, params);
      loss_sum += value;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(per_epoch);
    rec.val_acc = evaluate_accuracy(clf, val);
    rec.test_acc = evaluate_accuracy(clf, test);
    out.history.record(rec);
  }
  out.clf = std::move(clf);
  return out;
}

PretrainResult pretrain_contrastive(const Array& unlabeled, EncoderParams enc, ProjectionHeadParams ph,
                                    const AugmentationSpec& aug, double temperature,
                                    const TrainConfig& config) {
  if (unlabeled.rank() != 2 || unlabeled.dim(0) == 0) {
    throw ConfigError("pretrain_contrastive: need a nonempty (N, D) sample matrix");
  }
  config.validate();
  aug.validate();
  enc.validate();
  ph.validate();
  if (!(temperature > 0.0)) throw ConfigError("pretrain_contrastive: temperature must be positive");
  if (unlabeled.dim(1) != enc.input_dim() || ph.layers.front().in_dim() != enc.output_dim()) {
    throw ShapeError("pretrain_contrastive: data, encoder and projection head do not chain");
  }

  const std::size_t n = unlabeled.dim(0);
  const std::size_t d = unlabeled.dim(1);
  const std::vector<double> feature_std = column_std(unlabeled);
  const std::size_t n_enc = enc.layers.size();
  std::vector<DenseLayer> all = enc.layers;
  all.insert(all.end(), ph.layers.begin(), ph.layers.end());
  std::vector<Array> params = flatten(all);
  SGDState state = SGDState::zeros_like(params);

  const std::size_t per_epoch = batches_per_epoch(n, config.batch_size);
  const std::size_t total_steps = config.epochs * per_epoch;
  std::size_t step = 0;
  PretrainResult out;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    AugmentationSpec epoch_aug = aug;
    epoch_aug.seed = derive_seed(aug.seed, {epoch});
    const auto order = epoch_order(n, config.seed, epoch);
    double term_sum = 0.0;
    std::size_t term_count = 0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t m = std::min(n, begin + config.batch_size) - begin;
      std::vector<double> views(2 * m * d);
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t row = order[begin + i];
        const auto sample = unlabeled.data().subspan(row * d, d);
        const auto [v0, v1] = make_views(sample, epoch_aug, feature_std, row);
        std::copy(v0.begin(), v0.end(), views.begin() + static_cast<std::ptrdiff_t>((2 * i) * d));
        std::copy(v1.begin(), v1.end(), views.begin() + static_cast<std::ptrdiff_t>((2 * i + 1) * d));
      }

      Tape tape;
      const auto bound = bind_layers(tape, all, true);
      const std::span<const BoundLayer> enc_layers(bound.data(), n_enc);
      const std::span<const BoundLayer> head_layers(bound.data() + n_enc, bound.size() - n_enc);
      const Var h = mlp(enc_layers, tape.constant(Array({2 * m, d}, std::move(views))), true);
      const Var z = mlp(head_layers, h, false);
      Var total;
      try {
        total = nt_xent_loss(z, temperature);
      } catch (const DomainError& e) {
        throw TrainingError("pretrain_contrastive: " + std::string(e.what()) + " at " + where(epoch, b));
      }
      const double value = total.value().item();
      if (!std::isfinite(value)) {
        throw TrainingError("pretrain_contrastive: non-finite loss at " + where(epoch, b));
      }
      if (step == 0) out.first_batch_loss = value;
      const Var objective = total * (1.0 / static_cast<double>(2 * m));
      const auto grads = tape.gradients(objective, leaves_of(bound));
      if (!all_finite(grads)) {
        throw TrainingError("pretrain_contrastive: non-finite gradient at " + where(epoch, b));
      }
      sgd_step(params, grads, state, config, step++, total_steps);
      all = unflatten(all, params);
      term_sum += value;
      term_count += 2 * m;
    }
    out.epoch_loss.push_back(term_sum / static_cast<double>(term_count));
  }
  out.encoder.layers.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_enc));
  return out;
}

}  // namespace lab
