#include <algorithm>
#include <cmath>
#include <map>

#include "doctest.h"
#include "reticgen/flow_model.hpp"
#include "reticgen/sampler.hpp"
#include "support.hpp"

using namespace reticgen;

namespace {

// Pearson chi-square against uniform counts.
double chi_square(const std::map<int, int>& counts, double total) {
  const double expected = total / static_cast<double>(counts.size());
  double s = 0;
  for (auto [k, c] : counts) s += (c - expected) * (c - expected) / expected;
  return s;
}

FlowModel skewed_model(const AssemblyEnv& env, std::uint64_t seed) {
  Rng rng(seed);
  auto model = FlowModel::initialized({env.vocab_size(), 4, 8}, rng);
  for (auto& [name, t] : model.parameters()) {
    if (name == "output_bias") {
      for (double& v : t->values) v = rng.uniform(-4, 4);
    }
  }
  return model;
}

}  // namespace

TEST_CASE("epsilon one samples valid actions uniformly") {
  auto env = testing::tiny_env();
  auto model = skewed_model(env, 4);
  Rng rng(2024);
  const int n = 100000;
  std::vector<std::map<int, int>> counts(env.slot_count());
  for (int i = 0; i < n; ++i) {
    auto t = sample_actions(model, env, 1.0, rng);
    for (std::size_t s = 0; s < t.actions.size(); ++s) counts[s][t.actions[s]]++;
  }
  // Critical values at significance 0.001 for 2 and 1 degrees of freedom.
  CHECK(counts[0].size() == 3);
  CHECK(chi_square(counts[0], n) < 13.816);
  CHECK(chi_square(counts[1], n) < 10.828);
  CHECK(chi_square(counts[2], n) < 10.828);
}

TEST_CASE("zero model samples uniformly and records uniform log-probabilities") {
  auto env = testing::tiny_env();
  auto model = FlowModel::zeros({env.vocab_size(), 4, 8});
  Rng rng(1);
  std::map<std::vector<int>, int> freq;
  const int n = 24000;
  for (int i = 0; i < n; ++i) {
    auto t = sample_actions(model, env, 0.0, rng);
    REQUIRE(t.forward_log_probs.size() == 3);
    CHECK(t.forward_log_probs[0] == doctest::Approx(std::log(1.0 / 3)));
    CHECK(t.forward_log_probs[1] == doctest::Approx(std::log(0.5)));
    CHECK(t.forward_log_probs[2] == doctest::Approx(std::log(0.5)));
    freq[t.actions]++;
  }
  CHECK(freq.size() == 12);
  double chi = 0;
  for (auto& [seq, c] : freq) chi += (c - 2000.0) * (c - 2000.0) / 2000.0;
  CHECK(chi < 31.264);  // 11 degrees of freedom, significance 0.001
}

TEST_CASE("dominant logits: modal sequence is the greedy rollout") {
  auto env = testing::tiny_env();
  auto model = skewed_model(env, 8);
  for (auto& [name, t] : model.parameters()) {
    if (name == "output_bias") {
      for (double& v : t->values) v = 0;
      for (const char* id : {"N2", "N5", "E1"}) t->values[static_cast<std::size_t>(env.vocabulary().index_of(id))] = 6;
    }
  }
  std::vector<int> greedy;
  auto state = model.initial_state();
  int token = kStartToken;
  AssemblyState s;
  while (!env.is_terminal(s)) {
    auto out = model.forward_step(token, state);
    auto mask = env.valid_actions(s);
    int best = -1;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i] && (best < 0 || out.logits[i] > out.logits[static_cast<std::size_t>(best)])) best = static_cast<int>(i);
    }
    greedy.push_back(best);
    s = env.step(s, best);
    state = out.state;
    token = best;
  }
  CHECK(env.to_record(greedy) == "tiny:N2,N5,E1");

  Rng rng(3);
  std::map<std::vector<int>, int> freq;
  for (int i = 0; i < 2000; ++i) freq[sample_actions(model, env, 0.0, rng).actions]++;
  auto mode = std::max_element(freq.begin(), freq.end(), [](auto& a, auto& b) { return a.second < b.second; });
  CHECK(mode->first == greedy);
}

TEST_CASE("recorded log-probabilities are the pure policy's under exploration") {
  auto env = testing::load_env("ffc.topo");
  auto model = skewed_model(env, 12);
  auto fn = RewardFunction::surrogate({});
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    auto t = sample_trajectory(model, env, fn, 0.3, rng);
    CHECK_FALSE(env.check_sequence(t.actions).has_value());
    auto replay = replay_log_probs(model, env, t.actions);
    REQUIRE(replay.size() == t.forward_log_probs.size());
    for (std::size_t k = 0; k < replay.size(); ++k) CHECK(replay[k] == t.forward_log_probs[k]);
    CHECK(t.reward == fn.evaluate(env, t.actions).reward);
  }
}

TEST_CASE("cached policy is transparent") {
  auto env = testing::tiny_env();
  auto model = skewed_model(env, 21);
  CachedPolicy cached(model);
  Rng a(9), b(9);
  for (int i = 0; i < 500; ++i) {
    auto x = sample_actions(model, env, 0.1, a);
    auto y = sample_actions(cached, env, 0.1, b);
    CHECK(x.actions == y.actions);
    CHECK(x.forward_log_probs == y.forward_log_probs);
  }
  CHECK(cached.log_z() == model.log_z());
}
