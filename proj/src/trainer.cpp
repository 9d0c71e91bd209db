#include "reticgen/trainer.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "reticgen/error.hpp"
#include "reticgen/sampler.hpp"
#include "reticgen/text.hpp"

namespace reticgen {

void TrainConfig::validate() const {
  if (!(learning_rate_model > 0.0)) throw ValidationError("train: learning_rate_model must be positive");
  if (!(learning_rate_log_z > 0.0)) throw ValidationError("train: learning_rate_log_z must be positive");
  if (max_episodes < 0) throw ValidationError("train: max_episodes must be non-negative");
  if (stop_window < 1) throw ValidationError("train: stop_window must be at least 1");
  if (stop_window > max_episodes) throw ValidationError("train: stop_window exceeds max_episodes");
  if (std::isnan(stop_threshold)) throw ValidationError("train: stop_threshold is NaN");
  if (batch_size < 1) throw ValidationError("train: batch_size must be at least 1");
  if (!(exploration_epsilon >= 0.0 && exploration_epsilon <= 1.0)) {
    throw ValidationError("train: exploration_epsilon must lie in [0, 1]");
  }
  if (smoothing_window < 1) throw ValidationError("train: smoothing_window must be at least 1");
  if (checkpoint_every < 0) throw ValidationError("train: checkpoint_every must be non-negative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_epsilon > 0.0)) {
    throw ValidationError("train: invalid Adam settings");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate_model", learning_rate_model},
          {"learning_rate_log_z", learning_rate_log_z},
          {"max_episodes", max_episodes},
          {"stop_window", stop_window},
          {"stop_threshold", text::format_double(stop_threshold)},
          {"batch_size", batch_size},
          {"exploration_epsilon", exploration_epsilon},
          {"seed", seed},
          {"smoothing_window", smoothing_window},
          {"checkpoint_every", checkpoint_every},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_epsilon", adam_epsilon}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.learning_rate_model = j.at("learning_rate_model").get<double>();
    c.learning_rate_log_z = j.at("learning_rate_log_z").get<double>();
    c.max_episodes = j.at("max_episodes").get<std::int64_t>();
    c.stop_window = j.at("stop_window").get<std::int64_t>();
    const auto threshold = text::parse_double(j.at("stop_threshold").get<std::string>());
    if (!threshold) throw ValidationError("train config: bad stop_threshold");
    c.stop_threshold = *threshold;
    c.batch_size = j.at("batch_size").get<std::int64_t>();
    c.exploration_epsilon = j.at("exploration_epsilon").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.smoothing_window = j.at("smoothing_window").get<std::int64_t>();
    c.checkpoint_every = j.at("checkpoint_every").get<std::int64_t>();
    c.adam_beta1 = j.at("adam_beta1").get<double>();
    c.adam_beta2 = j.at("adam_beta2").get<double>();
    c.adam_epsilon = j.at("adam_epsilon").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::threshold:
      return "threshold";
    case StopReason::max_episodes:
      return "max_episodes";
    case StopReason::halted:
      return "halted";
  }
  return "unknown";
}

double tb_residual(double log_z, std::span<const double> forward_log_probs, const RewardSpec& spec, double reward) {
  double log_pf = 0.0;
  for (double lp : forward_log_probs) log_pf += lp;
  return log_z + log_pf - std::log(loss_reward(spec, reward));
}

double tb_loss(const Policy& policy, const AssemblyEnv& env, std::span<const Trajectory> batch, const RewardSpec& spec) {
  if (batch.empty()) throw ContractError("tb_loss: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = batch[i];
    if (!env.is_terminal(AssemblyState{t.actions})) throw ContractError("tb_loss: trajectory is not terminal");
    const auto log_probs = replay_log_probs(policy, env, t.actions);
    const double r = tb_residual(policy.log_z(), log_probs, spec, t.reward);
    if (!std::isfinite(r)) {
      throw TrainingAbort("tb_loss: non-finite residual for trajectory " + std::to_string(i) + " (" +
                          env.to_record(t.actions) + ")");
    }
    total += r * r;
  }
  return total / static_cast<double>(batch.size());
}

Var tb_loss(Tape& tape, const FlowModel& model, const FlowModel::Bound& bound, const AssemblyEnv& env,
            std::span<const Trajectory> batch, const RewardSpec& spec, std::vector<Var>* per_trajectory) {
  if (batch.empty()) throw ContractError("tb_loss: empty batch");
  std::vector<Var> squares;
  for (const auto& t : batch) {
    if (!env.is_terminal(AssemblyState{t.actions})) throw ContractError("tb_loss: trajectory is not terminal");
    std::vector<Var> terms{bound.log_z};
    AssemblyState state = env.initial_state();
    auto hidden = model.initial_state(tape);
    int token = kStartToken;
    for (int action : t.actions) {
      auto [logits, next] = model.forward_step(tape, bound, token, hidden);
      Var log_probs = tape.masked_log_softmax(logits, env.valid_actions(state));
      terms.push_back(tape.pick(log_probs, static_cast<std::size_t>(action)));
      state = env.step(state, action);
      hidden = next;
      token = action;
    }
    Var residual = tape.add_constant(tape.sum(terms), -std::log(loss_reward(spec, t.reward)));
    squares.push_back(tape.square(residual));
  }
  if (per_trajectory) *per_trajectory = squares;
  return tape.mean(squares);
}

std::vector<std::optional<double>> moving_average(std::span<const double> series, std::size_t window) {
  if (window == 0) throw ContractError("moving_average: window must be at least 1");
  std::vector<std::optional<double>> out(series.size());
  for (std::size_t i = window - 1; i < series.size(); ++i) {
    double acc = 0.0;
    for (std::size_t j = i + 1 - window; j <= i; ++j) acc += series[j];
    out[i] = acc / static_cast<double>(window);
  }
  return out;
}

std::string metrics_csv_header() { return "episode,loss,smoothed_loss,log_z,reward,best_reward"; }

std::string metrics_csv_line(const EpisodeMetrics& m) {
  std::string line = std::to_string(m.episode);
  line += ',' + text::format_double(m.loss);
  line += ',' + (m.smoothed_loss ? text::format_double(*m.smoothed_loss) : std::string());
  line += ',' + text::format_double(m.log_z);
  line += ',' + text::format_double(m.reward);
  line += ',' + text::format_double(m.best_reward);
  return line;
}

CsvMetricsWriter::CsvMetricsWriter(const std::string& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::trunc) {
  if (!out_) throw std::runtime_error(path + ": cannot open metrics file");
  if (!append) out_ << metrics_csv_header() << '\n';
}

void CsvMetricsWriter::record(const EpisodeMetrics& m) {
  out_ << metrics_csv_line(m) << '\n';
  out_.flush();
}

namespace {

AdamSettings adam_settings(const TrainConfig& c, double lr) {
  return AdamSettings{lr, c.adam_beta1, c.adam_beta2, c.adam_epsilon};
}

FlowModel& tracked(FlowModel& model) {
  model.track();
  return model;
}

double trailing_mean(const std::deque<double>& values, std::size_t window) {
  double acc = 0.0;
  for (std::size_t j = values.size() - window; j < values.size(); ++j) acc += values[j];
  return acc / static_cast<double>(window);
}

const nlohmann::json& meta_at(const Checkpoint& ck, const char* key) {
  if (!ck.meta.contains(key)) throw ValidationError(std::string("checkpoint: missing field '") + key + "'");
  return ck.meta.at(key);
}

}  // namespace

Checkpoint model_checkpoint(const FlowModel& model, std::uint64_t env_fingerprint) {
  Checkpoint ck;
  const auto& c = model.config();
  ck.meta["kind"] = "flow-model";
  ck.meta["model"] = {{"vocab_size", c.vocab_size}, {"embed_dim", c.embed_dim}, {"hidden_dim", c.hidden_dim}};
  ck.meta["environment_fingerprint"] = env_fingerprint;
  for (const auto& [name, t] : model.parameters()) ck.put("param." + name, t->values);
  return ck;
}

FlowModel model_from_checkpoint(const Checkpoint& ck) {
  FlowModelConfig c;
  try {
    const auto& m = meta_at(ck, "model");
    c.vocab_size = m.at("vocab_size").get<std::size_t>();
    c.embed_dim = m.at("embed_dim").get<std::size_t>();
    c.hidden_dim = m.at("hidden_dim").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: bad model block: ") + e.what());
  }
  FlowModel model = FlowModel::zeros(c);
  for (auto& [name, t] : model.parameters()) {
    const auto& values = ck.array("param." + name);
    if (values.size() != t->size()) throw ValidationError("checkpoint: parameter '" + name + "' has the wrong size");
    t->values = values;
  }
  if (!model.all_finite()) throw ValidationError("checkpoint: non-finite parameter values");
  return model;
}

Trainer::Trainer(TrainConfig config, FlowModel model, const AssemblyEnv& env, const RewardFunction& reward_fn)
    : config_(config),
      model_(std::move(model)),
      env_(env),
      reward_fn_(reward_fn),
      network_opt_(tracked(model_).network_parameters(), adam_settings(config_, config_.learning_rate_model)),
      log_z_opt_({&model_.log_z_tensor()}, adam_settings(config_, config_.learning_rate_log_z)),
      rng_(Rng::derive(config_.seed, 0)) {
  config_.validate();
  if (model_.vocab_size() != env_.vocab_size()) {
    throw ConfigurationError("trainer: model vocabulary (" + std::to_string(model_.vocab_size()) +
                             ") does not match environment (" + std::to_string(env_.vocab_size()) + ")");
  }
}

Trainer::Trainer(const Checkpoint& ck, const AssemblyEnv& env, const RewardFunction& reward_fn)
    : Trainer(TrainConfig::from_json(meta_at(ck, "train_config")), model_from_checkpoint(ck), env, reward_fn) {
  try {
    if (meta_at(ck, "environment_fingerprint").get<std::uint64_t>() != env.fingerprint()) {
      throw ValidationError("checkpoint: environment fingerprint does not match the configured topology/vocabulary");
    }
    rng_ = Rng::deserialize(meta_at(ck, "rng").get<std::string>());
    episode_ = meta_at(ck, "episode").get<std::int64_t>();
    best_reward_ = ck.array("best_reward").at(0);
    finished_ = meta_at(ck, "finished").get<bool>();
    auto moments = [&](const std::string& prefix, std::vector<std::pair<std::string, Tensor*>> params) {
      std::vector<std::vector<double>> m, v;
      for (auto& [name, t] : params) {
        m.push_back(ck.array(prefix + ".m." + name));
        v.push_back(ck.array(prefix + ".v." + name));
      }
      return std::pair{m, v};
    };
    auto all = model_.parameters();
    std::vector<std::pair<std::string, Tensor*>> network(all.begin(), all.end() - 1);
    auto [nm, nv] = moments("adam", network);
    network_opt_.restore(meta_at(ck, "adam_steps").get<std::int64_t>(), std::move(nm), std::move(nv));
    auto [lm, lv] = moments("adam", {all.back()});
    log_z_opt_.restore(meta_at(ck, "adam_steps_log_z").get<std::int64_t>(), std::move(lm), std::move(lv));
    const auto& tail = ck.array("recent_losses");
    recent_losses_.assign(tail.begin(), tail.end());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  } catch (const std::out_of_range&) {
    throw ValidationError("checkpoint: malformed best_reward");
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck = model_checkpoint(model_, env_.fingerprint());
  ck.meta["kind"] = "training-state";
  ck.meta["train_config"] = config_.to_json();
  ck.meta["rng"] = rng_.serialize();
  ck.meta["episode"] = episode_;
  ck.meta["finished"] = finished_;
  ck.meta["adam_steps"] = network_opt_.step_count();
  ck.meta["adam_steps_log_z"] = log_z_opt_.step_count();
  ck.put("best_reward", {best_reward_});
  const auto params = model_.parameters();
  for (std::size_t k = 0; k + 1 < params.size(); ++k) {
    ck.put("adam.m." + params[k].first, network_opt_.first_moments()[k]);
    ck.put("adam.v." + params[k].first, network_opt_.second_moments()[k]);
  }
  ck.put("adam.m.log_z", log_z_opt_.first_moments()[0]);
  ck.put("adam.v.log_z", log_z_opt_.second_moments()[0]);
  ck.put("recent_losses", std::vector<double>(recent_losses_.begin(), recent_losses_.end()));
  return ck;
}

void Trainer::write_checkpoint() const {
  if (!checkpoint_path_.empty()) save_checkpoint(checkpoint_path_, checkpoint());
}

bool Trainer::below_threshold() const {
  if (!std::isfinite(config_.stop_threshold)) return false;
  const auto window = static_cast<std::size_t>(config_.stop_window);
  if (episode_ < config_.stop_window || recent_losses_.size() < window) return false;
  return trailing_mean(recent_losses_, window) < config_.stop_threshold;
}

TrainOutcome Trainer::run(MetricsSink* sink, std::optional<std::int64_t> halt_after) {
  const std::size_t keep =
      static_cast<std::size_t>(std::max(config_.stop_window, config_.smoothing_window));
  const auto smoothing = static_cast<std::size_t>(config_.smoothing_window);
  TrainOutcome outcome;

  if (finished_) {
    outcome.reason = below_threshold() ? StopReason::threshold : StopReason::max_episodes;
    outcome.episodes = episode_;
    return outcome;
  }

  while (episode_ < config_.max_episodes) {
    const std::int64_t n = std::min(config_.batch_size, config_.max_episodes - episode_);
    const double log_z_before = model_.log_z();
    std::vector<Trajectory> batch;
    batch.reserve(static_cast<std::size_t>(n));
    for (std::int64_t b = 0; b < n; ++b) {
      batch.push_back(sample_trajectory(model_, env_, reward_fn_, config_.exploration_epsilon, rng_));
    }

    Tape tape;
    const auto bound = model_.bind(tape);
    std::vector<Var> per_traj;
    Var loss = tb_loss(tape, model_, bound, env_, batch, reward_fn_.spec(), &per_traj);
    const double loss_value = tape.scalar_value(loss);
    if (!std::isfinite(loss_value)) {
      std::ostringstream dump;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        dump << "\n  " << env_.to_record(batch[i].actions) << " reward=" << text::format_double(batch[i].reward)
             << " loss=" << text::format_double(tape.scalar_value(per_traj[i]));
      }
      throw TrainingAbort("training: non-finite loss at episode " + std::to_string(episode_ + 1) + dump.str());
    }

    model_.zero_grad();
    tape.backward(loss);
    network_opt_.step();
    log_z_opt_.step();
    model_.zero_grad();
    metrics_.log_z_trace.push_back(model_.log_z());

    for (std::size_t i = 0; i < batch.size(); ++i) {
      ++episode_;
      EpisodeMetrics m;
      m.episode = episode_;
      m.loss = tape.scalar_value(per_traj[i]);
      m.log_z = log_z_before;
      m.reward = batch[i].reward;
      best_reward_ = std::max(best_reward_, m.reward);
      m.best_reward = best_reward_;
      recent_losses_.push_back(m.loss);
      if (recent_losses_.size() > keep) recent_losses_.pop_front();
      if (recent_losses_.size() >= smoothing && episode_ >= config_.smoothing_window) {
        m.smoothed_loss = trailing_mean(recent_losses_, smoothing);
      }
      metrics_.episodes.push_back(m);
      if (sink) sink->record(m);
    }

    if (config_.checkpoint_every > 0 &&
        (episode_ - n) / config_.checkpoint_every != episode_ / config_.checkpoint_every) {
      write_checkpoint();
    }
    if (below_threshold()) {
      finished_ = true;
      outcome.reason = StopReason::threshold;
      break;
    }
    if (episode_ >= config_.max_episodes) {
      finished_ = true;
      outcome.reason = StopReason::max_episodes;
      break;
    }
    if (halt_after && episode_ >= *halt_after) {
      outcome.reason = StopReason::halted;
      break;
    }
  }
  if (episode_ >= config_.max_episodes && !finished_) {
    finished_ = true;
    outcome.reason = StopReason::max_episodes;
  }
  outcome.episodes = episode_;
  write_checkpoint();
  return outcome;
}

TrainResult train(const TrainConfig& config, FlowModel model, const AssemblyEnv& env, const RewardFunction& reward_fn,
                  MetricsSink* sink) {
  Trainer trainer(config, std::move(model), env, reward_fn);
  TrainOutcome outcome = trainer.run(sink);
  return TrainResult{trainer.model(), trainer.metrics(), outcome};
}

}  // namespace reticgen
