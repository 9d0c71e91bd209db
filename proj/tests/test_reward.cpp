#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "reticgen/error.hpp"
#include "reticgen/reward.hpp"
#include "reticgen/rng.hpp"
#include "support.hpp"

using namespace reticgen;

namespace {

GsaResult gsa(double v) { return GsaResult::ok(v); }

std::string write_stub(const std::string& name, const std::string& body) {
  auto dir = testing::scratch("stubs_" + name);
  auto path = dir / (name + ".sh");
  std::ofstream(path) << "#!/bin/sh\n" << body << "\n";
  std::filesystem::permissions(path, std::filesystem::perms::owner_all);
  return path.string();
}

ExternalAdapterConfig adapter(const std::string& command, int timeout_ms = 5000) {
  ExternalAdapterConfig c;
  c.command = command;
  c.timeout = std::chrono::milliseconds(timeout_ms);
  return c;
}

}  // namespace

TEST_CASE("reward spot values") {
  RewardSpec spec;
  CHECK(reward(spec, gsa(5000)) == 1.0);
  CHECK(std::abs(reward(spec, gsa(10000)) - std::exp(1.0)) < 1e-12);
  CHECK(reward(spec, gsa(4500)) == 0.0);
  CHECK(reward(spec, gsa(0)) == 0.0);
  CHECK(reward(spec, GsaResult::failure("boom")) == 0.0);
}

TEST_CASE("reward on the scaled grid and monotonicity") {
  RewardSpec spec;
  spec.cutoff = 3000;
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double t = rng.uniform(0, 4);
    CHECK(reward(spec, gsa(spec.cutoff * (1 + t))) == doctest::Approx(std::exp(t)).epsilon(1e-13));
  }
  double prev = -1;
  for (double g = 0; g < 20000; g += 37.5) {
    const double r = reward(spec, gsa(g));
    CHECK(r >= prev);
    if (g < spec.cutoff) CHECK(r == 0.0);
    if (g > spec.cutoff) CHECK(r > prev);
    prev = r;
  }
}

TEST_CASE("loss reward floor") {
  RewardSpec spec;
  CHECK(loss_reward(spec, 0.0) == 1e-6);
  CHECK(loss_reward(spec, 2.5) == 2.5);
  spec.reward_floor = 1e-3;
  CHECK(loss_reward(spec, 1e-5) == 1e-3);
}

TEST_CASE("reward spec validation") {
  RewardSpec spec;
  spec.cutoff = 0;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec = {};
  spec.reward_floor = 1.0;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec.reward_floor = 0.0;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
}

TEST_CASE("surrogate gsa") {
  Vocabulary one({{"N1", TokenKind::node, 50, 100}});
  auto r = surrogate_gsa(one, {0}, 1.0);
  REQUIRE(r.has_value());
  CHECK(*r.value == 2.0);

  auto env = testing::tiny_env();
  auto seq = testing::tokens(env, {"N3", "N5", "E2"});
  auto perm = testing::tokens(env, {"E2", "N3", "N5"});
  CHECK(*surrogate_gsa(env.vocabulary(), seq, 6022.14076).value ==
        *surrogate_gsa(env.vocabulary(), perm, 6022.14076).value);

  CHECK_FALSE(surrogate_gsa(env.vocabulary(), {}, 1.0).has_value());
}

TEST_CASE("fixture reward table") {
  auto env = testing::tiny_env();
  auto fn = RewardFunction::surrogate({});
  const auto terminals = env.enumerate_terminals();
  const auto& table = testing::tiny_table();
  double z = 0;
  for (std::size_t i = 0; i < terminals.size(); ++i) {
    auto ev = fn.evaluate(env, terminals[i]);
    CHECK(*ev.gsa.value == doctest::Approx(table[i].gsa).epsilon(1e-13));
    CHECK(ev.reward == doctest::Approx(table[i].reward).epsilon(1e-13));
    z += ev.reward;
  }
  CHECK(z == doctest::Approx(testing::kTinyZ).epsilon(1e-13));
}

TEST_CASE("memoization and batch order") {
  auto env = testing::tiny_env();
  auto fn = RewardFunction::surrogate({}, true);
  auto terminals = env.enumerate_terminals();
  std::vector<std::vector<int>> batch;
  for (int rep = 0; rep < 3; ++rep) batch.insert(batch.end(), terminals.rbegin(), terminals.rend());
  auto out = fn.evaluate_batch(env, batch);
  REQUIRE(out.size() == batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) CHECK(out[i].reward == fn.evaluate(env, batch[i]).reward);
  CHECK(fn.evaluations() == 12);

  auto plain = RewardFunction::surrogate({}, false);
  plain.evaluate_batch(env, batch);
  CHECK(plain.evaluations() == batch.size());
}

TEST_CASE("external adapter protocol") {
  const std::string record = "tiny:N1,N4,E1";
  SUBCASE("value on stdout") {
    auto r = external_gsa(adapter(write_stub("echo", "cat >/dev/null; echo 6000.0")), record);
    REQUIRE(r.has_value());
    CHECK(*r.value == 6000.0);
  }
  SUBCASE("record arrives on stdin and arguments are passed") {
    auto r = external_gsa(
        adapter(write_stub("args", "read rec; [ \"$rec\" = \"" + record + "\" ] && [ \"$2\" = 1.525 ] && echo 7000")),
        record);
    REQUIRE(r.has_value());
    CHECK(*r.value == 7000.0);
  }
  SUBCASE("non-zero exit") {
    auto r = external_gsa(adapter(write_stub("fail", "echo 6000; exit 3")), record);
    CHECK_FALSE(r.has_value());
    CHECK(reward({}, r) == 0.0);
  }
  SUBCASE("timeout") {
    auto r = external_gsa(adapter(write_stub("slow", "sleep 5; echo 6000"), 200), record);
    CHECK_FALSE(r.has_value());
  }
  SUBCASE("garbage output") {
    CHECK_FALSE(external_gsa(adapter(write_stub("junk", "echo not-a-number")), record).has_value());
    CHECK_FALSE(external_gsa(adapter(write_stub("neg", "echo -12")), record).has_value());
    CHECK_FALSE(external_gsa(adapter(write_stub("empty", "true")), record).has_value());
  }
  SUBCASE("missing command") {
    CHECK_FALSE(external_gsa(adapter("/nonexistent/evaluator"), record).has_value());
    CHECK_FALSE(external_gsa(adapter(""), record).has_value());
  }
}

TEST_CASE("external evaluator in a reward function keeps input order") {
  auto env = testing::tiny_env();
  auto cfg = adapter(write_stub("len", "read rec; case \"$rec\" in *N3*) exit 1;; *E2*) echo 6000;; *) echo 4000;; esac"));
  cfg.workers = 3;
  RewardFunction fn({}, std::make_shared<ExternalEvaluator>(cfg), true, 3);
  auto terminals = env.enumerate_terminals();
  auto out = fn.evaluate_batch(env, terminals);
  for (std::size_t i = 0; i < terminals.size(); ++i) {
    const auto record = env.to_record(terminals[i]);
    if (record.find("N3") != std::string::npos) {
      CHECK_FALSE(out[i].gsa.has_value());
      CHECK(out[i].reward == 0.0);
    } else if (record.find("E2") != std::string::npos) {
      CHECK(out[i].reward == doctest::Approx(std::exp(0.2)));
    } else {
      CHECK(out[i].reward == 0.0);
    }
  }
}
