#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <shared_mutex>
#include <vector>

#include "reticgen/environment.hpp"
#include "reticgen/policy.hpp"
#include "reticgen/reward.hpp"
#include "reticgen/rng.hpp"

namespace reticgen {

// Draws one trajectory. Actions come from (1 - epsilon) * policy +
// epsilon * uniform-over-valid; forward_log_probs always hold the pure
// policy's log-probabilities. The terminal reward is attached unfloored.
Trajectory sample_trajectory(const Policy& policy, const AssemblyEnv& env, const RewardFunction& reward_fn,
                             double exploration_epsilon, Rng& rng);

// Same draw without evaluating the reward.
Trajectory sample_actions(const Policy& policy, const AssemblyEnv& env, double exploration_epsilon, Rng& rng);

// Masked log-probabilities of every step of `actions` under `policy`.
std::vector<double> replay_log_probs(const Policy& policy, const AssemblyEnv& env, const std::vector<int>& actions);

// Memoizes logits by prefix on top of a frozen policy. Useful for bulk
// sampling where the number of distinct prefixes is small. Thread-safe.
class CachedPolicy final : public Policy {
 public:
  explicit CachedPolicy(const Policy& base, std::size_t max_entries = 1u << 20);
  std::unique_ptr<PolicyCursor> start() const override;
  double log_z() const override { return base_.log_z(); }
  std::size_t vocab_size() const override { return base_.vocab_size(); }

 private:
  friend class CachedCursor;
  const Policy& base_;
  std::size_t max_entries_;
  mutable std::shared_mutex mutex_;
  mutable std::map<std::vector<int>, std::vector<double>> cache_;
};

}  // namespace reticgen
