#pragma once

#include <cstdint>
#include <vector>

#include "reticgen/autodiff.hpp"

namespace reticgen {

struct AdamSettings {
  double learning_rate = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over one parameter group. Moment buffers are owned here
// and kept in parameter order so they can be checkpointed.
class Adam {
 public:
  Adam(std::vector<Tensor*> parameters, AdamSettings settings);

  // Applies one update from the accumulated gradients. Throws TrainingAbort
  // (leaving parameters untouched) if any gradient is non-finite.
  void step();

  std::int64_t step_count() const { return step_count_; }
  const AdamSettings& settings() const { return settings_; }
  std::vector<std::vector<double>>& first_moments() { return first_; }
  std::vector<std::vector<double>>& second_moments() { return second_; }
  const std::vector<std::vector<double>>& first_moments() const { return first_; }
  const std::vector<std::vector<double>>& second_moments() const { return second_; }
  void restore(std::int64_t step_count, std::vector<std::vector<double>> first,
               std::vector<std::vector<double>> second);

 private:
  std::vector<Tensor*> params_;
  AdamSettings settings_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::int64_t step_count_ = 0;
};

}  // namespace reticgen
