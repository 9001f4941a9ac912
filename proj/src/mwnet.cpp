#include "lab/mwnet.hpp"

#include <algorithm>
#include <cmath>

#include "lab/error.hpp"
#include "lab/random.hpp"

namespace lab {

void WeightNet::validate() const {
  if (hidden.weight.shape() != Shape{1, hidden.out_dim()} || output.weight.shape() != Shape{hidden.out_dim(), 1}) {
    throw ShapeError("weight net must map 1 -> H -> 1, got " + shape_str(hidden.weight.shape()) +
                     " and " + shape_str(output.weight.shape()));
  }
  if (hidden.bias.shape() != Shape{1, hidden.out_dim()} || output.bias.shape() != Shape{1, 1}) {
    throw ShapeError("weight net bias shapes do not match its weights");
  }
}

WeightNet init_weight_net(std::size_t hidden, std::uint64_t seed) {
  if (hidden == 0) throw ConfigError("weight net needs at least one hidden unit");
  return {glorot_layer(1, hidden, derive_seed(seed, {0x3E1, 0})),
          glorot_layer(hidden, 1, derive_seed(seed, {0x3E1, 1}))};
}

WeightNet zero_weight_net(std::size_t hidden) {
  if (hidden == 0) throw ConfigError("weight net needs at least one hidden unit");
  return {zero_layer(1, hidden), zero_layer(hidden, 1)};
}

std::vector<Array> flatten(const WeightNet& net) {
  return {net.hidden.weight, net.hidden.bias, net.output.weight, net.output.bias};
}

WeightNet unflatten(const WeightNet& like, std::span<const Array> values) {
  const DenseLayer layers[] = {like.hidden, like.output};
  const auto out = unflatten(layers, values);
  return {out[0], out[1]};
}

Var weight_net_forward(std::span<const BoundLayer> net, Var losses) {
  if (net.size() != 2) throw ShapeError("weight net must have two layers");
  return sigmoid(mlp(net, losses, false));
}

namespace {

std::vector<BoundLayer> bind_net(Tape& tape, const WeightNet& net, bool as_leaves) {
  const DenseLayer layers[] = {net.hidden, net.output};
  return bind_layers(tape, layers, as_leaves);
}

Array column(std::span<const double> v) { return Array({v.size(), 1}, {v.begin(), v.end()}); }

bool all_finite(std::span<const Array> arrays) {
  return std::all_of(arrays.begin(), arrays.end(), [](const Array& a) { return a.all_finite(); });
}

}  // namespace

std::vector<double> sample_weights(const WeightNet& net, std::span<const double> losses) {
  net.validate();
  if (losses.empty()) return {};
  Tape tape;
  const auto bound = bind_net(tape, net, false);
  const Array w = weight_net_forward(bound, tape.constant(column(losses))).value();
  return {w.data().begin(), w.data().end()};
}

void MWNetConfig::validate() const {
  train.validate();
  inner_loss.validate();
  if (!(meta_lr >= 0.0) || !std::isfinite(meta_lr)) throw ConfigError("mwnet: meta_lr must be >= 0");
  if (hidden == 0) throw ConfigError("mwnet: hidden must be positive");
}

std::vector<double> per_sample_loss(const ClassifierParams& clf, const LabeledDataset& batch,
                                    const LossSpec& loss) {
  Tape tape;
  const Var logits = tape.constant(predict_logits(clf, batch.x));
  const Array rows = loss_rows(loss, logits, batch.targets()).value();
  return {rows.data().begin(), rows.data().end()};
}

std::vector<Array> meta_gradient(const ClassifierParams& clf, const WeightNet& net,
                                 const LabeledDataset& train_batch, const LabeledDataset& val_batch,
                                 double alpha, const LossSpec& inner_loss) {
  if (train_batch.empty()) throw ConfigError("meta step: empty training batch");
  if (val_batch.empty()) throw ConfigError("meta step: clean validation batch is empty");
  Tape tape;
  const BoundClassifier w = bind_classifier(tape, clf, true);
  const auto theta = bind_net(tape, net, true);
  const std::vector<Var> w_leaves = w.leaves();

  const Var losses = loss_rows(inner_loss, predict_logits(w, tape.constant(train_batch.x)),
                               train_batch.targets());
  const Var weights = weight_net_forward(theta, tape.constant(losses.value()));
  const Var inner = sum(weights * losses) * (1.0 / static_cast<double>(train_batch.size()));

  const std::vector<Var> grads = tape.backward_as_graph(inner, w_leaves);
  std::vector<Var> stepped;
  stepped.reserve(w_leaves.size());
  for (std::size_t i = 0; i < w_leaves.size(); ++i) stepped.push_back(w_leaves[i] - grads[i] * alpha);

  const Var val_logits = predict_logits(classifier_from_vars(stepped), tape.constant(val_batch.x));
  const Var val_loss = mean(cce_rows(val_logits, val_batch.targets()));
  return tape.gradients(val_loss, leaves_of(theta));
}

std::vector<Array> weighted_loss_gradient(const ClassifierParams& clf, const LabeledDataset& batch,
                                          std::span<const double> weights, const LossSpec& loss) {
  if (weights.size() != batch.size()) throw ShapeError("weighted loss: one weight per sample required");
  Tape tape;
  const BoundClassifier w = bind_classifier(tape, clf, true);
  const Var losses = loss_rows(loss, predict_logits(w, tape.constant(batch.x)), batch.targets());
  const Var objective =
      sum(losses * tape.constant(column(weights))) * (1.0 / static_cast<double>(batch.size()));
  return tape.gradients(objective, w.leaves());
}

MetaStepResult mwnet_meta_step(const ClassifierParams& clf, const WeightNet& net,
                               const LabeledDataset& train_batch, const LabeledDataset& val_batch,
                               const MWNetConfig& config, SGDState& state, std::size_t step,
                               std::size_t total_steps) {
  MetaStepResult out;
  out.meta_grad = meta_gradient(clf, net, train_batch, val_batch, config.train.inner_lr, config.inner_loss);
  if (!all_finite(out.meta_grad)) throw TrainingError("meta step: non-finite meta-gradient");

  std::vector<Array> theta = flatten(net);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    std::vector<double> v(theta[i].data().begin(), theta[i].data().end());
    const auto g = out.meta_grad[i].data();
    for (std::size_t j = 0; j < v.size(); ++j) v[j] -= config.meta_lr * g[j];
    theta[i] = Array(theta[i].shape(), std::move(v));
  }
  out.net = unflatten(net, theta);

  const std::vector<double> losses = per_sample_loss(clf, train_batch, config.inner_loss);
  double total = 0.0;
  for (double l : losses) total += l;
  out.train_loss = total / static_cast<double>(losses.size());
  if (!std::isfinite(out.train_loss)) throw TrainingError("meta step: non-finite training loss");

  out.weights = sample_weights(out.net, losses);
  const auto grads = weighted_loss_gradient(clf, train_batch, out.weights, config.inner_loss);
  if (!all_finite(grads)) throw TrainingError("meta step: non-finite classifier gradient");
  std::vector<Array> params = flatten(clf);
  sgd_step(params, grads, state, config.train, step, total_steps);
  out.clf = unflatten(clf, params);
  return out;
}

MWNetResult train_mwnet(const LabeledDataset& train, const LabeledDataset& val, const LabeledDataset& test,
                        ClassifierParams clf, const MWNetConfig& config) {
  if (train.empty() || test.empty()) throw ConfigError("train_mwnet: empty dataset");
  if (val.empty()) throw ConfigError("train_mwnet: clean validation set is empty");
  config.validate();
  clf.validate();
  if (train.dim() != clf.encoder.input_dim() || val.dim() != train.dim() || test.dim() != train.dim()) {
    throw ShapeError("train_mwnet: feature dimensions differ between datasets and model");
  }
  if (train.num_classes != clf.num_classes() || val.num_classes != train.num_classes ||
      test.num_classes != train.num_classes) {
    throw ShapeError("train_mwnet: class counts differ between datasets and model");
  }

  const TrainConfig& tc = config.train;
  MWNetResult out;
  out.history.initial_train_loss = mean_loss(clf, train, config.inner_loss);
  out.history.initial_cce = mean_loss(clf, train, LossSpec::cce());
  WeightNet net = init_weight_net(config.hidden, config.wnet_seed);

  const std::size_t per_epoch = batches_per_epoch(train.size(), tc.batch_size);
  const std::size_t total_steps = tc.epochs * per_epoch;
  const std::size_t val_batch =
      std::min(val.size(), config.val_batch_size ? config.val_batch_size : tc.batch_size);
  const std::uint64_t val_seed = derive_seed(tc.seed, {0x7A1});
  SGDState state = SGDState::zeros_like(flatten(clf));
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto order = epoch_order(train.size(), tc.seed, epoch);
    std::size_t cycle = 0;
    auto val_order = epoch_order(val.size(), val_seed, epoch << 16);
    std::size_t val_cursor = 0;
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t begin = b * tc.batch_size;
      const std::size_t end = std::min(train.size(), begin + tc.batch_size);
      const LabeledDataset batch =
          train.subset(std::span<const std::size_t>(order.data() + begin, end - begin));
      if (val_cursor + val_batch > val.size()) {
        val_order = epoch_order(val.size(), val_seed, (epoch << 16) + ++cycle);
        val_cursor = 0;
      }
      const LabeledDataset clean =
          val.subset(std::span<const std::size_t>(val_order.data() + val_cursor, val_batch));
      val_cursor += val_batch;

      MetaStepResult r;
      try {
        r = mwnet_meta_step(clf, net, batch, clean, config, state, step++, total_steps);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b));
      } catch (const DomainError& e) {
        throw TrainingError("meta step: " + std::string(e.what()) + " at epoch " +
                            std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      clf = std::move(r.clf);
      net = std::move(r.net);
      loss_sum += r.train_loss;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(per_epoch);
    rec.val_acc = evaluate_accuracy(clf, val);
    rec.test_acc = evaluate_accuracy(clf, test);
    if (!train.flipped.empty()) {
      const auto w = sample_weights(net, per_sample_loss(clf, train, config.inner_loss));
      double sf = 0.0, sc = 0.0;
      std::size_t nf = 0, nc = 0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (train.flipped[i]) {
          sf += w[i];
          ++nf;
        } else {
          sc += w[i];
          ++nc;
        }
      }
      if (nf) rec.mean_weight_flipped = sf / static_cast<double>(nf);
      if (nc) rec.mean_weight_clean = sc / static_cast<double>(nc);
    }
    out.history.record(rec);
  }
  out.clf = std::move(clf);
  out.net = std::move(net);
  return out;
}

}  // namespace lab
