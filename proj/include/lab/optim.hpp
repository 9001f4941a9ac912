#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lab/array.hpp"

namespace lab {

enum class Schedule { constant, cosine };

std::string to_string(Schedule s);
Schedule parse_schedule(const std::string& name);

struct TrainConfig {
  double lr = 0.01;
  /// Rate of the virtual (look-ahead) step in meta-reweighting.
  double inner_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  Schedule schedule = Schedule::constant;
  std::uint64_t seed = 0;

  void validate() const;
};

/// lr at `step` out of `total_steps`; the cosine schedule reaches 0 at the end.
double learning_rate(const TrainConfig& config, std::size_t step, std::size_t total_steps);

/// Momentum buffers, one per parameter array.
struct SGDState {
  std::vector<Array> velocity;

  static SGDState zeros_like(std::span<const Array> params);
};

/// v <- momentum * v + grad + weight_decay * param; param <- param - lr(step) * v.
void sgd_step(std::vector<Array>& params, std::span<const Array> grads, SGDState& state,
              const TrainConfig& config, std::size_t step, std::size_t total_steps);

}  // namespace lab
