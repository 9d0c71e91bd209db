#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "reticgen/autodiff.hpp"
#include "reticgen/policy.hpp"
#include "reticgen/rng.hpp"

namespace reticgen {

inline constexpr int kStartToken = -1;

struct FlowModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 256;

  void validate() const;
};

struct RecurrentState {
  std::vector<double> hidden;
  std::vector<double> cell;
};

struct StepOutput {
  std::vector<double> logits;
  RecurrentState state;
};

// One LSTM cell over token embeddings followed by a linear head. Row
// vocab_size of the embedding is the start sentinel. Gate blocks in the
// stacked weights are ordered input, forget, candidate, output.
class FlowModel final : public Policy {
 public:
  // All parameters zero; logZ zero.
  static FlowModel zeros(const FlowModelConfig& config);
  // Uniform in [-1/sqrt(hidden), 1/sqrt(hidden)], forget-gate bias +1, logZ 0.
  static FlowModel initialized(const FlowModelConfig& config, Rng& rng);

  const FlowModelConfig& config() const { return config_; }

  RecurrentState initial_state() const;
  StepOutput forward_step(int token, const RecurrentState& state) const;

  std::unique_ptr<PolicyCursor> start() const override;
  double log_z() const override { return log_z_[0]; }
  void set_log_z(double value) { log_z_[0] = value; }
  std::size_t vocab_size() const override { return config_.vocab_size; }

  // Name-ordered views; logZ is last and is its own parameter group.
  std::vector<std::pair<std::string, Tensor*>> parameters();
  std::vector<std::pair<std::string, const Tensor*>> parameters() const;
  std::vector<Tensor*> network_parameters();
  Tensor& log_z_tensor() { return log_z_; }

  void track();
  void zero_grad();
  bool all_finite() const;

  // Tape-side mirror of forward_step.
  struct Bound {
    Var embedding, input_weights, hidden_weights, gate_bias, output_weights, output_bias, log_z;
  };
  struct TrackedState {
    Var hidden, cell;
  };
  Bound bind(Tape& tape);
  TrackedState initial_state(Tape& tape) const;
  std::pair<Var, TrackedState> forward_step(Tape& tape, const Bound& bound, int token,
                                            const TrackedState& state) const;

 private:
  explicit FlowModel(const FlowModelConfig& config);
  std::size_t embedding_row(int token) const;

  FlowModelConfig config_;
  Tensor embedding_;       // (vocab+1) x embed
  Tensor input_weights_;   // 4H x embed
  Tensor hidden_weights_;  // 4H x H
  Tensor gate_bias_;       // 4H
  Tensor output_weights_;  // vocab x H
  Tensor output_bias_;     // vocab
  Tensor log_z_;           // 1
};

// Log-softmax restricted to mask==true entries; masked entries are -inf.
// Unmasked logits may be -inf (zero probability) as long as one is finite.
std::vector<double> masked_log_softmax(const std::vector<double>& logits, const ActionMask& mask);

}  // namespace reticgen
