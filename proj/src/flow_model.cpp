#include "reticgen/flow_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "reticgen/error.hpp"

namespace reticgen {

void FlowModelConfig::validate() const {
  if (vocab_size == 0) throw ConfigurationError("flow model: vocab_size must be positive");
  if (embed_dim == 0) throw ConfigurationError("flow model: embed_dim must be positive");
  if (hidden_dim == 0) throw ConfigurationError("flow model: hidden_dim must be positive");
}

FlowModel::FlowModel(const FlowModelConfig& config)
    : config_(config),
      embedding_({config.vocab_size + 1, config.embed_dim}),
      input_weights_({4 * config.hidden_dim, config.embed_dim}),
      hidden_weights_({4 * config.hidden_dim, config.hidden_dim}),
      gate_bias_({4 * config.hidden_dim}),
      output_weights_({config.vocab_size, config.hidden_dim}),
      output_bias_({config.vocab_size}),
      log_z_({1}) {
  config.validate();
}

FlowModel FlowModel::zeros(const FlowModelConfig& config) { return FlowModel(config); }

FlowModel FlowModel::initialized(const FlowModelConfig& config, Rng& rng) {
  FlowModel model(config);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.hidden_dim));
  for (Tensor* t : model.network_parameters()) {
    for (double& v : t->values) v = rng.uniform(-bound, bound);
  }
  const std::size_t h = config.hidden_dim;
  for (std::size_t i = h; i < 2 * h; ++i) model.gate_bias_[i] = 1.0;
  return model;
}

std::size_t FlowModel::embedding_row(int token) const {
  if (token == kStartToken) return config_.vocab_size;
  if (token < 0 || static_cast<std::size_t>(token) >= config_.vocab_size) {
    throw ConfigurationError("flow model: token " + std::to_string(token) +
                             " outside vocabulary of size " + std::to_string(config_.vocab_size));
  }
  return static_cast<std::size_t>(token);
}

RecurrentState FlowModel::initial_state() const {
  return {std::vector<double>(config_.hidden_dim, 0.0), std::vector<double>(config_.hidden_dim, 0.0)};
}

namespace {

void matvec_into(const Tensor& w, const double* x, double* out) {
  const std::size_t rows = w.rows(), cols = w.cols();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* wr = w.values.data() + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += wr[j] * x[j];
    out[i] = acc;
  }
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

StepOutput FlowModel::forward_step(int token, const RecurrentState& state) const {
  const std::size_t h = config_.hidden_dim, e = config_.embed_dim, v = config_.vocab_size;
  if (state.hidden.size() != h || state.cell.size() != h) {
    throw ConfigurationError("flow model: recurrent state has dimension " +
                             std::to_string(state.hidden.size()) + ", expected " + std::to_string(h));
  }
  const double* x = embedding_.values.data() + embedding_row(token) * e;

  // Same association order as the tape path: (Wx x + Wh h) + b.
  std::vector<double> from_input(4 * h), from_hidden(4 * h);
  matvec_into(input_weights_, x, from_input.data());
  matvec_into(hidden_weights_, state.hidden.data(), from_hidden.data());

  StepOutput out;
  out.state.hidden.resize(h);
  out.state.cell.resize(h);
  for (std::size_t k = 0; k < h; ++k) {
    auto pre = [&](std::size_t block) {
      const std::size_t idx = block * h + k;
      return (from_input[idx] + from_hidden[idx]) + gate_bias_[idx];
    };
    const double in_gate = logistic(pre(0));
    const double forget_gate = logistic(pre(1));
    const double candidate = std::tanh(pre(2));
    const double out_gate = logistic(pre(3));
    const double cell = forget_gate * state.cell[k] + in_gate * candidate;
    out.state.cell[k] = cell;
    out.state.hidden[k] = out_gate * std::tanh(cell);
  }
  out.logits.resize(v);
  matvec_into(output_weights_, out.state.hidden.data(), out.logits.data());
  for (std::size_t i = 0; i < v; ++i) out.logits[i] += output_bias_[i];
  return out;
}

namespace {

class FlowCursor final : public PolicyCursor {
 public:
  explicit FlowCursor(const FlowModel& model) : model_(model) {
    step_ = model_.forward_step(kStartToken, model_.initial_state());
  }
  std::vector<double> logits() const override { return step_.logits; }
  void advance(int token) override { step_ = model_.forward_step(token, step_.state); }

 private:
  const FlowModel& model_;
  StepOutput step_;
};

class UniformCursor final : public PolicyCursor {
 public:
  explicit UniformCursor(std::size_t n) : n_(n) {}
  std::vector<double> logits() const override { return std::vector<double>(n_, 0.0); }
  void advance(int) override {}

 private:
  std::size_t n_;
};

}  // namespace

std::unique_ptr<PolicyCursor> FlowModel::start() const { return std::make_unique<FlowCursor>(*this); }

std::unique_ptr<PolicyCursor> UniformPolicy::start() const {
  return std::make_unique<UniformCursor>(vocab_size_);
}

std::vector<std::pair<std::string, Tensor*>> FlowModel::parameters() {
  return {{"embedding", &embedding_},           {"input_weights", &input_weights_},
          {"hidden_weights", &hidden_weights_}, {"gate_bias", &gate_bias_},
          {"output_weights", &output_weights_}, {"output_bias", &output_bias_},
          {"log_z", &log_z_}};
}

std::vector<std::pair<std::string, const Tensor*>> FlowModel::parameters() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<FlowModel*>(this)->parameters()) out.emplace_back(name, t);
  return out;
}

std::vector<Tensor*> FlowModel::network_parameters() {
  return {&embedding_, &input_weights_, &hidden_weights_, &gate_bias_, &output_weights_, &output_bias_};
}

void FlowModel::track() {
  for (auto& [name, t] : parameters()) {
    if (!t->tracked()) t->track();
  }
}

void FlowModel::zero_grad() {
  for (auto& [name, t] : parameters()) t->zero_grad();
}

bool FlowModel::all_finite() const {
  for (const auto& [name, t] : parameters()) {
    for (double v : t->values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

FlowModel::Bound FlowModel::bind(Tape& tape) {
  track();
  return Bound{tape.parameter(embedding_),      tape.parameter(input_weights_),
               tape.parameter(hidden_weights_), tape.parameter(gate_bias_),
               tape.parameter(output_weights_), tape.parameter(output_bias_),
               tape.parameter(log_z_)};
}

FlowModel::TrackedState FlowModel::initial_state(Tape& tape) const {
  return {tape.constant(std::vector<double>(config_.hidden_dim, 0.0)),
          tape.constant(std::vector<double>(config_.hidden_dim, 0.0))};
}

std::pair<Var, FlowModel::TrackedState> FlowModel::forward_step(Tape& tape, const Bound& bound, int token,
                                                                const TrackedState& state) const {
  const std::size_t h = config_.hidden_dim;
  if (tape.size(state.hidden) != h || tape.size(state.cell) != h) {
    throw ConfigurationError("flow model: recurrent state dimension mismatch");
  }
  Var x = tape.row(bound.embedding, embedding_row(token));
  Var pre = tape.add(tape.add(tape.matvec(bound.input_weights, x), tape.matvec(bound.hidden_weights, state.hidden)),
                     bound.gate_bias);
  Var in_gate = tape.sigmoid(tape.slice(pre, 0, h));
  Var forget_gate = tape.sigmoid(tape.slice(pre, h, h));
  Var candidate = tape.tanh(tape.slice(pre, 2 * h, h));
  Var out_gate = tape.sigmoid(tape.slice(pre, 3 * h, h));
  Var cell = tape.add(tape.mul(forget_gate, state.cell), tape.mul(in_gate, candidate));
  Var hidden = tape.mul(out_gate, tape.tanh(cell));
  Var logits = tape.affine(bound.output_weights, hidden, bound.output_bias);
  return {logits, TrackedState{hidden, cell}};
}

std::vector<double> masked_log_softmax(const std::vector<double>& logits, const ActionMask& mask) {
  if (logits.size() != mask.size()) {
    throw ConfigurationError("masked_log_softmax: logits and mask differ in length");
  }
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) peak = std::max(peak, logits[i]);
  }
  if (!std::isfinite(peak)) throw DeadEndError("masked_log_softmax: every action is masked");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) total += std::exp(logits[i] - peak);
  }
  const double log_norm = peak + std::log(total);
  std::vector<double> out(logits.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) out[i] = logits[i] - log_norm;
  }
  return out;
}

}  // namespace reticgen
