#include <cmath>
#include <limits>
#include <map>

#include "doctest.h"
#include "reticgen/error.hpp"
#include "reticgen/flow_model.hpp"

using namespace reticgen;

namespace {

std::map<std::string, std::vector<double>> by_name(FlowModel& model) {
  std::map<std::string, std::vector<double>> out;
  for (auto& [name, t] : model.parameters()) out[name] = t->values;
  return out;
}

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Scalar LSTM step written straight from the gate equations.
std::vector<double> reference_step(std::map<std::string, std::vector<double>>& p, std::size_t vocab, std::size_t e,
                                   std::size_t h, int token, std::vector<double>& hid, std::vector<double>& cell) {
  const std::size_t row = token < 0 ? vocab : static_cast<std::size_t>(token);
  std::vector<double> x(e);
  for (std::size_t j = 0; j < e; ++j) x[j] = p["embedding"][row * e + j];
  std::vector<double> z(4 * h);
  for (std::size_t r = 0; r < 4 * h; ++r) {
    double a = 0, b = 0;
    for (std::size_t j = 0; j < e; ++j) a += p["input_weights"][r * e + j] * x[j];
    for (std::size_t j = 0; j < h; ++j) b += p["hidden_weights"][r * h + j] * hid[j];
    z[r] = a + b + p["gate_bias"][r];
  }
  std::vector<double> nh(h), nc(h);
  for (std::size_t k = 0; k < h; ++k) {
    const double i = sig(z[k]), f = sig(z[h + k]), g = std::tanh(z[2 * h + k]), o = sig(z[3 * h + k]);
    nc[k] = f * cell[k] + i * g;
    nh[k] = o * std::tanh(nc[k]);
  }
  hid = nh;
  cell = nc;
  std::vector<double> logits(vocab);
  for (std::size_t v = 0; v < vocab; ++v) {
    double s = p["output_bias"][v];
    for (std::size_t k = 0; k < h; ++k) s += p["output_weights"][v * h + k] * hid[k];
    logits[v] = s;
  }
  return logits;
}

}  // namespace

TEST_CASE("zero parameters give zero logits") {
  auto model = FlowModel::zeros({5, 4, 6});
  auto state = model.initial_state();
  for (int token : {kStartToken, 0, 4}) {
    auto out = model.forward_step(token, state);
    for (double l : out.logits) CHECK(l == 0.0);
    state = out.state;
  }
  CHECK(model.log_z() == 0.0);
}

TEST_CASE("seeded initialization is reproducible and bounded") {
  Rng a(42), b(42);
  auto m1 = FlowModel::initialized({7, 8, 16}, a);
  auto m2 = FlowModel::initialized({7, 8, 16}, b);
  auto s1 = m1.initial_state(), s2 = m2.initial_state();
  for (int token : {kStartToken, 3, 6, 0}) {
    auto o1 = m1.forward_step(token, s1);
    auto o2 = m2.forward_step(token, s2);
    CHECK(o1.logits == o2.logits);
    s1 = o1.state;
    s2 = o2.state;
  }
  const double bound = 0.25;
  for (auto& [name, t] : m1.parameters()) {
    if (name == "log_z") {
      CHECK(t->values[0] == 0.0);
      continue;
    }
    for (std::size_t i = 0; i < t->size(); ++i) {
      if (name == "gate_bias" && i >= 16 && i < 32) {
        CHECK(t->values[i] == 1.0);
      } else {
        CHECK(std::abs(t->values[i]) <= bound);
      }
    }
  }
}

TEST_CASE("forward step matches a scalar recomputation of the gates") {
  Rng rng(9);
  const std::size_t vocab = 3, e = 4, h = 5;
  auto model = FlowModel::initialized({vocab, e, h}, rng);
  auto params = by_name(model);
  std::vector<double> hid(h, 0.0), cell(h, 0.0);
  auto state = model.initial_state();
  for (int token : {kStartToken, 2, 0, 1}) {
    auto out = model.forward_step(token, state);
    auto expected = reference_step(params, vocab, e, h, token, hid, cell);
    for (std::size_t v = 0; v < vocab; ++v) CHECK(out.logits[v] == doctest::Approx(expected[v]).epsilon(1e-13));
    state = out.state;
  }
}

TEST_CASE("tape forward step reproduces the untracked step exactly") {
  Rng rng(5);
  auto model = FlowModel::initialized({6, 3, 4}, rng);
  model.track();
  Tape tape;
  auto bound = model.bind(tape);
  auto tracked = model.initial_state(tape);
  auto state = model.initial_state();
  for (int token : {kStartToken, 5, 1}) {
    auto [logits, next] = model.forward_step(tape, bound, token, tracked);
    auto out = model.forward_step(token, state);
    auto v = tape.value(logits);
    CHECK(std::vector<double>(v.begin(), v.end()) == out.logits);
    tracked = next;
    state = out.state;
  }
}

TEST_CASE("dimension mismatches are configuration errors") {
  auto model = FlowModel::zeros({3, 2, 4});
  RecurrentState bad{std::vector<double>(3, 0.0), std::vector<double>(4, 0.0)};
  CHECK_THROWS_AS(model.forward_step(0, bad), ConfigurationError);
  CHECK_THROWS_AS(model.forward_step(3, model.initial_state()), ConfigurationError);
  CHECK_THROWS_AS(model.forward_step(-2, model.initial_state()), ConfigurationError);
  CHECK_THROWS_AS(FlowModel::zeros({0, 2, 4}), ConfigurationError);
}

TEST_CASE("masked log-softmax") {
  const double inf = std::numeric_limits<double>::infinity();
  SUBCASE("uniform") {
    auto lp = masked_log_softmax({0, 0, 0}, {true, true, true});
    for (double v : lp) CHECK(v == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-15));
  }
  SUBCASE("single valid action") {
    auto lp = masked_log_softmax({5, -2, 7}, {true, false, false});
    CHECK(lp[0] == 0.0);
    CHECK(lp[1] == -inf);
    CHECK(lp[2] == -inf);
  }
  SUBCASE("partial mask") {
    auto lp = masked_log_softmax({1, 2, 3}, {true, true, false});
    CHECK(lp[0] == doctest::Approx(-1.313261687518223).epsilon(1e-14));
    CHECK(lp[1] == doctest::Approx(-0.31326168751822303).epsilon(1e-14));
    CHECK(lp[2] == -inf);
  }
  SUBCASE("all masked is a dead end") {
    CHECK_THROWS_AS(masked_log_softmax({1, 2}, {false, false}), DeadEndError);
  }
  SUBCASE("normalization on random inputs") {
    Rng rng(77);
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t n = 1 + rng.uniform_index(12);
      std::vector<double> logits(n);
      ActionMask mask(n);
      for (std::size_t i = 0; i < n; ++i) {
        logits[i] = rng.uniform(-30, 30);
        mask[i] = rng.uniform() < 0.6;
      }
      mask[rng.uniform_index(n)] = true;
      auto lp = masked_log_softmax(logits, mask);
      double total = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (mask[i]) {
          total += std::exp(lp[i]);
        } else {
          CHECK(lp[i] == -inf);
        }
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }
}
