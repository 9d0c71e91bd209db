#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "gradcheck.hpp"
#include "reticgen/analysis.hpp"
#include "reticgen/error.hpp"
#include "reticgen/sampler.hpp"
#include "reticgen/text.hpp"
#include "reticgen/trainer.hpp"
#include "support.hpp"

using namespace reticgen;

namespace {

class HugeGsa final : public GsaEvaluator {
 public:
  GsaResult evaluate(const AssemblyEnv&, const std::vector<int>&) const override { return GsaResult::ok(1e308); }
};

class StringSink final : public MetricsSink {
 public:
  void record(const EpisodeMetrics& m) override { out << metrics_csv_line(m); }
  std::ostringstream out;
};

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.max_episodes = 320;
  c.stop_window = 64;
  c.smoothing_window = 32;
  c.stop_threshold = std::numeric_limits<double>::infinity();
  c.batch_size = 16;
  return c;
}

FlowModel small_model(const AssemblyEnv& env, std::uint64_t seed) {
  Rng rng(seed);
  return FlowModel::initialized({env.vocab_size(), 6, 10}, rng);
}

}  // namespace

TEST_CASE("trajectory-balance residual") {
  RewardSpec spec;
  const std::vector<double> lp{std::log(0.5), std::log(0.25)};
  CHECK(tb_residual(1.0, lp, spec, 2.0) == doctest::Approx(1.0 + std::log(0.125) - std::log(2.0)));
  CHECK(tb_residual(0.0, {}, spec, 0.0) == doctest::Approx(-std::log(1e-6)));
}

TEST_CASE("single-terminal environment: logZ = log R gives zero loss") {
  auto env = testing::load_env("single.topo");
  auto fn = RewardFunction::surrogate({});
  auto model = FlowModel::zeros({env.vocab_size(), 2, 3});
  Rng rng(0);
  auto t = sample_trajectory(model, env, fn, 0.0, rng);
  CHECK(t.forward_log_probs == std::vector<double>{0.0});
  model.set_log_z(std::log(t.reward));
  const std::vector<Trajectory> batch{t};
  CHECK(tb_loss(model, env, batch, fn.spec()) == 0.0);
}

TEST_CASE("exact flows give zero loss and logZ offset gives delta squared") {
  auto env = testing::tiny_env();
  auto fn = RewardFunction::surrogate({});
  analysis::ExactFlows flows(env, fn);
  CHECK(flows.log_z() == doctest::Approx(testing::kTinyLogZ).epsilon(1e-14));
  for (const auto& seq : env.enumerate_terminals()) {
    Trajectory t;
    t.actions = seq;
    t.forward_log_probs = replay_log_probs(flows, env, seq);
    t.reward = fn.evaluate(env, seq).reward;
    const std::vector<Trajectory> batch{t};
    CHECK(tb_loss(flows, env, batch, fn.spec()) < 1e-12);
    const double delta = 0.37;
    const double r = tb_residual(flows.log_z() + delta, t.forward_log_probs, fn.spec(), t.reward);
    CHECK(r * r == doctest::Approx(delta * delta).epsilon(1e-10));
  }
}

TEST_CASE("tracked loss agrees with the replayed loss") {
  auto env = testing::tiny_env();
  auto fn = RewardFunction::surrogate({});
  auto model = small_model(env, 3);
  model.set_log_z(0.4);
  Rng rng(8);
  std::vector<Trajectory> batch;
  for (int i = 0; i < 5; ++i) batch.push_back(sample_trajectory(model, env, fn, 0.0, rng));
  model.track();
  Tape tape;
  auto bound = model.bind(tape);
  std::vector<Var> parts;
  Var loss = tb_loss(tape, model, bound, env, batch, fn.spec(), &parts);
  CHECK(tape.scalar_value(loss) == doctest::Approx(tb_loss(model, env, batch, fn.spec())).epsilon(1e-14));
  REQUIRE(parts.size() == 5);
  double mean = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    const double r = tb_residual(0.4, batch[i].forward_log_probs, fn.spec(), batch[i].reward);
    CHECK(tape.scalar_value(parts[i]) == doctest::Approx(r * r).epsilon(1e-13));
    mean += r * r / 5;
  }
  CHECK(tape.scalar_value(loss) == doctest::Approx(mean).epsilon(1e-13));
}

TEST_CASE("gradient of the loss on a two-step trajectory matches finite differences") {
  auto env = testing::load_env("tiny6_noedges.topo");
  auto fn = RewardFunction::surrogate({});
  Rng rng(31);
  FlowModel model = FlowModel::zeros({env.vocab_size(), 3, 4});
  for (auto& [name, t] : model.parameters()) {
    for (double& v : t->values) v = rng.uniform(-0.1, 0.1);
  }
  Rng draw(2);
  std::vector<Trajectory> batch{sample_trajectory(model, env, fn, 0.0, draw)};
  auto result = testing::check_tb_gradient(model, env, batch, fn.spec());
  CHECK(result.entries > 100);
  CHECK(result.max_relative_error < 1e-4);
}

TEST_CASE("moving average") {
  const std::vector<double> constant(10, 2.5);
  auto avg = moving_average(constant, 4);
  for (std::size_t i = 0; i < 10; ++i) {
    if (i < 3) {
      CHECK_FALSE(avg[i].has_value());
    } else {
      CHECK(*avg[i] == 2.5);
    }
  }
  const std::vector<double> series{3, -1, 4, 1, 5};
  auto id = moving_average(series, 1);
  for (std::size_t i = 0; i < series.size(); ++i) CHECK(*id[i] == series[i]);

  std::vector<double> spike(20, 0.0);
  spike[7] = 6.0;
  auto plateau = moving_average(spike, 3);
  for (std::size_t i = 2; i < 20; ++i) CHECK(*plateau[i] == doctest::Approx(i >= 7 && i <= 9 ? 2.0 : 0.0));
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.learning_rate_model = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.stop_window = c.max_episodes + 1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.exploration_epsilon = 1.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  auto round = TrainConfig::from_json(small_config(5).to_json());
  CHECK(round.to_json() == small_config(5).to_json());
  CHECK(std::isinf(round.stop_threshold));
}

TEST_CASE("infinite threshold runs exactly max episodes") {
  auto env = testing::tiny_env();
  auto fn = RewardFunction::surrogate({});
  auto cfg = small_config(1);
  cfg.max_episodes = 100;  // not a multiple of the batch size
  cfg.stop_window = 50;
  auto result = train(cfg, small_model(env, 1), env, fn);
  CHECK(result.outcome.reason == StopReason::max_episodes);
  CHECK(result.outcome.episodes == 100);
  CHECK(result.metrics.episodes.size() == 100);
  CHECK(result.metrics.log_z_trace.size() == 7);
}

TEST_CASE("single-terminal environment stops on the threshold") {
  auto env = testing::load_env("single.topo");
  auto fn = RewardFunction::surrogate({});
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.max_episodes = 100000;
  cfg.stop_window = 200;
  cfg.stop_threshold = 1e-3;
  cfg.learning_rate_log_z = 0.05;
  auto result = train(cfg, small_model(env, 2), env, fn);
  CHECK(result.outcome.reason == StopReason::threshold);
  CHECK(result.outcome.episodes < 20000);
  CHECK(result.model.log_z() == doctest::Approx(std::log(fn.evaluate(env, {0}).reward)).epsilon(0.05));
}

TEST_CASE("metrics record logZ, best reward and smoothing") {
  auto env = testing::tiny_env();
  auto fn = RewardFunction::surrogate({});
  auto result = train(small_config(4), small_model(env, 4), env, fn);
  const auto& eps = result.metrics.episodes;
  REQUIRE(eps.size() == 320);
  double best = 0;
  std::vector<double> losses;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    CHECK(eps[i].episode == static_cast<std::int64_t>(i + 1));
    best = std::max(best, eps[i].reward);
    CHECK(eps[i].best_reward == best);
    losses.push_back(eps[i].loss);
  }
  CHECK(eps[0].log_z == 0.0);
  CHECK(eps[16].log_z == result.metrics.log_z_trace[0]);
  auto smoothed = moving_average(losses, 32);
  for (std::size_t i = 0; i < eps.size(); ++i) {
    CHECK(eps[i].smoothed_loss.has_value() == smoothed[i].has_value());
    if (smoothed[i]) CHECK(*eps[i].smoothed_loss == doctest::Approx(*smoothed[i]).epsilon(1e-12));
  }
}

TEST_CASE("identical seeds give bit-identical parameter trajectories") {
  auto env = testing::tiny_env();
  auto fn = RewardFunction::surrogate({});
  auto cfg = small_config(99);
  cfg.batch_size = 1;
  cfg.max_episodes = 1000;
  cfg.stop_window = 100;
  Trainer a(cfg, small_model(env, 5), env, fn);
  Trainer b(cfg, small_model(env, 5), env, fn);
  StringSink sa, sb;
  a.run(&sa);
  b.run(&sb);
  CHECK(sa.out.str() == sb.out.str());
  CHECK(a.metrics().log_z_trace.size() == 1000);
  CHECK(a.metrics().log_z_trace == b.metrics().log_z_trace);
  auto pa = a.model().parameters();
  auto pb = b.model().parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second->values == pb[i].second->values);
}

TEST_CASE("interrupted training resumes bit-exactly") {
  auto env = testing::tiny_env();
  auto fn = RewardFunction::surrogate({});
  auto dir = testing::scratch("resume");
  auto cfg = small_config(17);

  Trainer whole(cfg, small_model(env, 6), env, fn);
  StringSink full;
  whole.run(&full);

  Trainer first(cfg, small_model(env, 6), env, fn);
  first.set_checkpoint_path((dir / "ck.bin").string());
  StringSink part;
  auto out = first.run(&part, 100);
  CHECK(out.reason == StopReason::halted);
  CHECK(out.episodes == 112);

  auto ck = load_checkpoint((dir / "ck.bin").string());
  Trainer second(ck, env, fn);
  CHECK(second.episode() == 112);
  second.run(&part);
  CHECK(part.out.str() == full.out.str());
  CHECK(encode_checkpoint(second.checkpoint()) == encode_checkpoint(whole.checkpoint()));

  auto other = testing::load_env("tiny6_noedges.topo");
  CHECK_THROWS_AS(Trainer(ck, other, fn), ValidationError);
}

TEST_CASE("metrics CSV writer") {
  auto dir = testing::scratch("metrics_csv");
  const auto path = (dir / "m.csv").string();
  EpisodeMetrics m;
  m.episode = 1;
  m.loss = 0.5;
  m.log_z = 0.25;
  m.reward = 1.5;
  m.best_reward = 1.5;
  {
    CsvMetricsWriter w(path, false);
    w.record(m);
  }
  {
    CsvMetricsWriter w(path, true);
    m.episode = 2;
    m.smoothed_loss = 0.5;
    w.record(m);
  }
  CHECK(text::read_file(path) ==
        "episode,loss,smoothed_loss,log_z,reward,best_reward\n1,0.5,,0.25,1.5,1.5\n2,0.5,0.5,0.25,1.5,1.5\n");
}

TEST_CASE("non-finite loss aborts and keeps the last checkpoint") {
  auto env = testing::tiny_env();
  RewardFunction huge({}, std::make_shared<HugeGsa>());
  auto dir = testing::scratch("abort");
  auto cfg = small_config(2);
  Trainer t(cfg, small_model(env, 2), env, huge);
  t.set_checkpoint_path((dir / "ck.bin").string());
  try {
    t.run();
    FAIL("expected abort");
  } catch (const TrainingAbort& e) {
    CHECK(std::string(e.what()).find("tiny:") != std::string::npos);
  }
  CHECK_FALSE(std::filesystem::exists(dir / "ck.bin"));
}

TEST_CASE("model checkpoints round-trip") {
  auto env = testing::tiny_env();
  auto model = small_model(env, 12);
  model.set_log_z(1.75);
  auto copy = model_from_checkpoint(decode_checkpoint(encode_checkpoint(model_checkpoint(model, env.fingerprint()))));
  auto a = model.parameters();
  auto b = copy.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].second->values == b[i].second->values);
}
