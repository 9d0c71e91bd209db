#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "reticgen/flow_model.hpp"
#include "reticgen/trainer.hpp"

namespace testing {

struct GradCheck {
  double max_relative_error = 0.0;
  std::size_t entries = 0;
};

using WideParams = std::map<std::string, std::vector<long double>>;

// TB loss recomputed from the gate equations in extended precision. At
// h = 1e-6 a double-precision loss of size ~100 (a floored reward adds
// -log 1e-6 to every residual) leaves ~1e-8 of roundoff in the difference,
// more than the smallest gradient entries being checked; long double cuts
// that by three orders of magnitude.
inline long double wide_tb_loss(const WideParams& p, const reticgen::FlowModelConfig& c,
                                const reticgen::AssemblyEnv& env, const std::vector<reticgen::Trajectory>& batch,
                                const reticgen::RewardSpec& spec) {
  const std::size_t e = c.embed_dim, h = c.hidden_dim, vocab = c.vocab_size;
  auto sig = [](long double z) { return 1.0L / (1.0L + std::exp(-z)); };
  const auto& emb = p.at("embedding");
  const auto& wi = p.at("input_weights");
  const auto& wh = p.at("hidden_weights");
  const auto& bias = p.at("gate_bias");
  const auto& wo = p.at("output_weights");
  const auto& bo = p.at("output_bias");
  long double total = 0;
  for (const auto& t : batch) {
    std::vector<long double> hid(h, 0), cell(h, 0), z(4 * h), logits(vocab);
    reticgen::AssemblyState state = env.initial_state();
    long double residual = p.at("log_z")[0] - std::log(static_cast<long double>(loss_reward(spec, t.reward)));
    int token = reticgen::kStartToken;
    for (int action : t.actions) {
      const std::size_t row = token < 0 ? vocab : static_cast<std::size_t>(token);
      for (std::size_t r = 0; r < 4 * h; ++r) {
        long double s = bias[r];
        for (std::size_t j = 0; j < e; ++j) s += wi[r * e + j] * emb[row * e + j];
        for (std::size_t j = 0; j < h; ++j) s += wh[r * h + j] * hid[j];
        z[r] = s;
      }
      for (std::size_t k = 0; k < h; ++k) {
        cell[k] = sig(z[h + k]) * cell[k] + sig(z[k]) * std::tanh(z[2 * h + k]);
        hid[k] = sig(z[3 * h + k]) * std::tanh(cell[k]);
      }
      const auto mask = env.valid_actions(state);
      long double peak = -INFINITY;
      for (std::size_t v = 0; v < vocab; ++v) {
        long double s = bo[v];
        for (std::size_t k = 0; k < h; ++k) s += wo[v * h + k] * hid[k];
        logits[v] = s;
        if (mask[v]) peak = std::max(peak, s);
      }
      long double norm = 0;
      for (std::size_t v = 0; v < vocab; ++v) {
        if (mask[v]) norm += std::exp(logits[v] - peak);
      }
      residual += logits[static_cast<std::size_t>(action)] - peak - std::log(norm);
      state = env.step(state, action);
      token = action;
    }
    total += residual * residual;
  }
  return total / static_cast<long double>(batch.size());
}

// Analytic trajectory-balance gradients against central differences of the
// extended-precision loss above. Relative error per entry is
// |a - n| / max(|a|, |n|, floor); the floor keeps entries whose true value is
// near zero from amplifying finite-difference roundoff.
inline GradCheck check_tb_gradient(reticgen::FlowModel model, const reticgen::AssemblyEnv& env,
                                   const std::vector<reticgen::Trajectory>& batch, const reticgen::RewardSpec& spec,
                                   double h = 1e-6, double floor = 1e-4) {
  using namespace reticgen;
  model.track();
  model.zero_grad();
  {
    Tape tape;
    auto bound = model.bind(tape);
    tape.backward(tb_loss(tape, model, bound, env, batch, spec));
  }
  WideParams wide;
  for (const auto& [name, t] : model.parameters()) wide[name].assign(t->values.begin(), t->values.end());
  GradCheck out;
  for (auto& [name, t] : model.parameters()) {
    auto& values = wide[name];
    for (std::size_t i = 0; i < t->size(); ++i) {
      const long double saved = values[i];
      values[i] = saved + h;
      const long double up = wide_tb_loss(wide, model.config(), env, batch, spec);
      values[i] = saved - h;
      const long double down = wide_tb_loss(wide, model.config(), env, batch, spec);
      values[i] = saved;
      const double numeric = static_cast<double>((up - down) / (2.0L * h));
      const double analytic = t->grad[i];
      const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
      out.max_relative_error = std::max(out.max_relative_error, std::abs(analytic - numeric) / scale);
      ++out.entries;
    }
  }
  return out;
}

}  // namespace testing
