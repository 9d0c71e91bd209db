#pragma once

#include <cstdint>
#include <deque>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "reticgen/adam.hpp"
#include "reticgen/checkpoint.hpp"
#include "reticgen/environment.hpp"
#include "reticgen/flow_model.hpp"
#include "reticgen/reward.hpp"
#include "reticgen/rng.hpp"

namespace reticgen {

struct TrainConfig {
  double learning_rate_model = 5e-3;
  double learning_rate_log_z = 5e-3;
  std::int64_t max_episodes = 100000;
  std::int64_t stop_window = 10000;
  // Stop once the mean loss over the last stop_window episodes drops below
  // this. +inf disables threshold stopping.
  double stop_threshold = 1.8;
  std::int64_t batch_size = 16;
  double exploration_epsilon = 0.0;
  std::uint64_t seed = 0;
  std::int64_t smoothing_window = 1000;
  std::int64_t checkpoint_every = 0;  // episodes; 0 = only at the end
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpisodeMetrics {
  std::int64_t episode = 0;  // 1-based
  double loss = 0.0;
  std::optional<double> smoothed_loss;
  double log_z = 0.0;  // value used when the episode was sampled
  double reward = 0.0;
  double best_reward = 0.0;
};

struct TrainMetrics {
  std::vector<EpisodeMetrics> episodes;
  std::vector<double> log_z_trace;  // after each update
};

enum class StopReason { threshold, max_episodes, halted };
std::string_view to_string(StopReason reason);

// Trajectory-balance residual logZ + sum log P_F - log max(R, floor). The
// backward-policy term is omitted: every state of an append-only sequence has
// exactly one parent, so log P_B is identically zero.
double tb_residual(double log_z, std::span<const double> forward_log_probs, const RewardSpec& spec, double reward);

// Mean squared residual over the batch, with log-probabilities recomputed from
// `policy`. Throws TrainingAbort on a non-finite value.
double tb_loss(const Policy& policy, const AssemblyEnv& env, std::span<const Trajectory> batch, const RewardSpec& spec);

// Tracked version on a tape; per-trajectory squared residuals go to
// `per_trajectory` when given.
Var tb_loss(Tape& tape, const FlowModel& model, const FlowModel::Bound& bound, const AssemblyEnv& env,
            std::span<const Trajectory> batch, const RewardSpec& spec, std::vector<Var>* per_trajectory = nullptr);

// Trailing mean; entries before index window-1 are absent.
std::vector<std::optional<double>> moving_average(std::span<const double> series, std::size_t window = 1000);

class MetricsSink {
 public:
  virtual ~MetricsSink() = default;
  virtual void record(const EpisodeMetrics& m) = 0;
};

// episode,loss,smoothed_loss,log_z,reward,best_reward
class CsvMetricsWriter final : public MetricsSink {
 public:
  // append=true continues an existing file (resumption) without a new header.
  CsvMetricsWriter(const std::string& path, bool append);
  void record(const EpisodeMetrics& m) override;

 private:
  std::ofstream out_;
};

std::string metrics_csv_header();
std::string metrics_csv_line(const EpisodeMetrics& m);

struct TrainOutcome {
  StopReason reason = StopReason::max_episodes;
  std::int64_t episodes = 0;
};

// On-policy trajectory-balance training. One episode is one sampled
// trajectory; parameters update after every batch_size episodes. All state
// needed to continue bit-exactly is captured by checkpoint().
class Trainer {
 public:
  Trainer(TrainConfig config, FlowModel model, const AssemblyEnv& env, const RewardFunction& reward_fn);
  // Continues a run saved by checkpoint(). The environment must match the
  // checkpoint's fingerprint.
  Trainer(const Checkpoint& checkpoint, const AssemblyEnv& env, const RewardFunction& reward_fn);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  // Runs until a stop condition, or until at least `halt_after` episodes
  // have completed (rounded up to a batch boundary). When checkpoint_path is
  // set, checkpoints are written at the configured cadence and on return.
  TrainOutcome run(MetricsSink* sink = nullptr, std::optional<std::int64_t> halt_after = std::nullopt);

  void set_checkpoint_path(std::string path) { checkpoint_path_ = std::move(path); }
  Checkpoint checkpoint() const;

  const FlowModel& model() const { return model_; }
  FlowModel& model() { return model_; }
  const TrainConfig& config() const { return config_; }
  const TrainMetrics& metrics() const { return metrics_; }
  std::int64_t episode() const { return episode_; }

 private:
  void write_checkpoint() const;
  bool below_threshold() const;

  TrainConfig config_;
  FlowModel model_;
  const AssemblyEnv& env_;
  const RewardFunction& reward_fn_;
  Adam network_opt_;
  Adam log_z_opt_;
  Rng rng_;
  std::int64_t episode_ = 0;
  double best_reward_ = 0.0;
  std::deque<double> recent_losses_;  // last max(stop_window, smoothing_window)
  TrainMetrics metrics_;
  std::string checkpoint_path_;
  bool finished_ = false;
};

struct TrainResult {
  FlowModel model;
  TrainMetrics metrics;
  TrainOutcome outcome;
};

TrainResult train(const TrainConfig& config, FlowModel model, const AssemblyEnv& env, const RewardFunction& reward_fn,
                  MetricsSink* sink = nullptr);

// Model parameters + flow-model config, without optimizer state.
Checkpoint model_checkpoint(const FlowModel& model, std::uint64_t env_fingerprint);
FlowModel model_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace reticgen
