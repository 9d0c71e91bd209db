#include "reticgen/adam.hpp"

#include <cmath>
#include <string>

#include "reticgen/error.hpp"

namespace reticgen {

Adam::Adam(std::vector<Tensor*> parameters, AdamSettings settings)
    : params_(std::move(parameters)), settings_(settings) {
  if (!(settings_.learning_rate > 0.0)) throw ValidationError("adam: learning rate must be positive");
  for (Tensor* p : params_) {
    if (!p->tracked()) p->track();
    first_.emplace_back(p->size(), 0.0);
    second_.emplace_back(p->size(), 0.0);
  }
}

void Adam::step() {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    for (double g : params_[k]->grad) {
      if (!std::isfinite(g)) {
        throw TrainingAbort("adam: non-finite gradient in parameter group entry " + std::to_string(k) +
                            " at step " + std::to_string(step_count_ + 1));
      }
    }
  }
  ++step_count_;
  const double b1 = settings_.beta1, b2 = settings_.beta2;
  const double t = static_cast<double>(step_count_);
  const double correction1 = 1.0 - std::pow(b1, t);
  const double correction2 = 1.0 - std::pow(b2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = *params_[k];
    auto& m = first_[k];
    auto& v = second_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p.values[i] -= settings_.learning_rate * m_hat / (std::sqrt(v_hat) + settings_.epsilon);
    }
  }
}

void Adam::restore(std::int64_t step_count, std::vector<std::vector<double>> first,
                   std::vector<std::vector<double>> second) {
  if (first.size() != params_.size() || second.size() != params_.size()) {
    throw ValidationError("adam: moment buffer count does not match parameters");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (first[k].size() != params_[k]->size() || second[k].size() != params_[k]->size()) {
      throw ValidationError("adam: moment buffer shape does not match parameter");
    }
  }
  step_count_ = step_count;
  first_ = std::move(first);
  second_ = std::move(second);
}

}  // namespace reticgen
