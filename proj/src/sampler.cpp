#include "reticgen/sampler.hpp"

#include <cmath>
#include <mutex>

#include "reticgen/error.hpp"
#include "reticgen/flow_model.hpp"

namespace reticgen {

namespace {

int draw_action(const std::vector<double>& log_probs, const ActionMask& mask, double epsilon, Rng& rng) {
  std::vector<int> valid;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) valid.push_back(static_cast<int>(i));
  }
  if (valid.empty()) throw DeadEndError("sampler: no valid action");
  if (epsilon >= 1.0) return valid[rng.uniform_index(valid.size())];

  const double uniform_share = epsilon / static_cast<double>(valid.size());
  const double u = rng.uniform();
  double cumulative = 0.0;
  int last_positive = -1;
  for (int a : valid) {
    const double p = (1.0 - epsilon) * std::exp(log_probs[static_cast<std::size_t>(a)]) + uniform_share;
    if (p <= 0.0) continue;
    last_positive = a;
    cumulative += p;
    if (u < cumulative) return a;
  }
  if (last_positive < 0) throw DeadEndError("sampler: every valid action has probability zero");
  return last_positive;  // rounding left u just past the total
}

}  // namespace

Trajectory sample_actions(const Policy& policy, const AssemblyEnv& env, double exploration_epsilon, Rng& rng) {
  if (!(exploration_epsilon >= 0.0 && exploration_epsilon <= 1.0)) {
    throw ContractError("sampler: exploration epsilon must lie in [0, 1]");
  }
  Trajectory traj;
  AssemblyState state = env.initial_state();
  auto cursor = policy.start();
  while (!env.is_terminal(state)) {
    const ActionMask mask = env.valid_actions(state);
    const auto log_probs = masked_log_softmax(cursor->logits(), mask);
    const int action = draw_action(log_probs, mask, exploration_epsilon, rng);
    traj.actions.push_back(action);
    traj.forward_log_probs.push_back(log_probs[static_cast<std::size_t>(action)]);
    state = env.step(state, action);
    if (!env.is_terminal(state)) cursor->advance(action);
  }
  return traj;
}

Trajectory sample_trajectory(const Policy& policy, const AssemblyEnv& env, const RewardFunction& reward_fn,
                             double exploration_epsilon, Rng& rng) {
  Trajectory traj = sample_actions(policy, env, exploration_epsilon, rng);
  traj.reward = reward_fn.evaluate(env, traj.actions).reward;
  return traj;
}

std::vector<double> replay_log_probs(const Policy& policy, const AssemblyEnv& env, const std::vector<int>& actions) {
  std::vector<double> out;
  AssemblyState state = env.initial_state();
  auto cursor = policy.start();
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const ActionMask mask = env.valid_actions(state);
    const auto log_probs = masked_log_softmax(cursor->logits(), mask);
    out.push_back(log_probs[static_cast<std::size_t>(actions[i])]);
    state = env.step(state, actions[i]);
    if (i + 1 < actions.size()) cursor->advance(actions[i]);
  }
  return out;
}

class CachedCursor final : public PolicyCursor {
 public:
  explicit CachedCursor(const CachedPolicy& owner) : owner_(owner) {}

  std::vector<double> logits() const override {
    {
      std::shared_lock lock(owner_.mutex_);
      if (auto it = owner_.cache_.find(prefix_); it != owner_.cache_.end()) return it->second;
    }
    if (!base_) {
      base_ = owner_.base_.start();
      applied_ = 0;
    }
    while (applied_ < prefix_.size()) base_->advance(prefix_[applied_++]);
    auto out = base_->logits();
    std::unique_lock lock(owner_.mutex_);
    if (owner_.cache_.size() < owner_.max_entries_) owner_.cache_.emplace(prefix_, out);
    return out;
  }

  void advance(int token) override { prefix_.push_back(token); }

 private:
  const CachedPolicy& owner_;
  std::vector<int> prefix_;
  mutable std::unique_ptr<PolicyCursor> base_;
  mutable std::size_t applied_ = 0;
};

CachedPolicy::CachedPolicy(const Policy& base, std::size_t max_entries) : base_(base), max_entries_(max_entries) {}

std::unique_ptr<PolicyCursor> CachedPolicy::start() const { return std::make_unique<CachedCursor>(*this); }

}  // namespace reticgen
