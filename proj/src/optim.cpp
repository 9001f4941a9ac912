#include "lab/optim.hpp"

#include <cmath>
#include <numbers>

#include "lab/error.hpp"

namespace lab {

std::string to_string(Schedule s) { return s == Schedule::cosine ? "cosine" : "constant"; }

Schedule parse_schedule(const std::string& name) {
  if (name == "constant") return Schedule::constant;
  if (name == "cosine") return Schedule::cosine;
  throw ConfigError("unknown schedule '" + name + "'");
}

void TrainConfig::validate() const {
  // A zero rate is allowed: it freezes the corresponding parameters.
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be >= 0");
  if (!(inner_lr >= 0.0) || !std::isfinite(inner_lr)) {
    throw ConfigError("train: inner_lr must be >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ConfigError("train: weight_decay must be >= 0");
  }
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
}

double learning_rate(const TrainConfig& config, std::size_t step, std::size_t total_steps) {
  if (config.schedule == Schedule::constant || total_steps == 0) return config.lr;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return config.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

SGDState SGDState::zeros_like(std::span<const Array> params) {
  SGDState s;
  s.velocity.reserve(params.size());
  for (const Array& p : params) s.velocity.push_back(Array::zeros(p.shape()));
  return s;
}

void sgd_step(std::vector<Array>& params, std::span<const Array> grads, SGDState& state,
              const TrainConfig& config, std::size_t step, std::size_t total_steps) {
  if (grads.size() != params.size() || state.velocity.size() != params.size()) {
    throw ShapeError("sgd_step: " + std::to_string(params.size()) + " params, " +
                     std::to_string(grads.size()) + " grads, " +
                     std::to_string(state.velocity.size()) + " momentum buffers");
  }
  const double lr = learning_rate(config, step, total_steps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Array& p = params[i];
    if (grads[i].shape() != p.shape() || state.velocity[i].shape() != p.shape()) {
      throw ShapeError("sgd_step: parameter " + std::to_string(i) + " has shape " +
                       shape_str(p.shape()) + ", grad " + shape_str(grads[i].shape()));
    }
    const auto pv = p.data();
    const auto gv = grads[i].data();
    const auto vv = state.velocity[i].data();
    std::vector<double> np(pv.size()), nv(pv.size());
    for (std::size_t j = 0; j < pv.size(); ++j) {
      nv[j] = config.momentum * vv[j] + gv[j] + config.weight_decay * pv[j];
      np[j] = pv[j] - lr * nv[j];
    }
    state.velocity[i] = Array(p.shape(), std::move(nv));
    params[i] = Array(p.shape(), std::move(np));
  }
}

}  // namespace lab
