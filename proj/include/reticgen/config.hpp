#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"
#include "reticgen/environment.hpp"
#include "reticgen/flow_model.hpp"
#include "reticgen/reward.hpp"
#include "reticgen/trainer.hpp"

namespace reticgen {

// Everything a run needs, read from a `key = value` file (# comments).
// Relative paths resolve against the config file's directory. Keys:
//
//   vocabulary, topology, edges
//   cutoff, evaluator (surrogate|external), surrogate_scale, reward_floor, memoize
//   external_command, external_args, external_timeout_ms, external_workers
//   learning_rate_model, learning_rate_log_z, max_episodes, stop_window,
//   stop_threshold, batch_size, exploration_epsilon, seed, smoothing_window,
//   checkpoint_every, adam_beta1, adam_beta2, adam_epsilon
//   embed_dim, hidden_dim, workers
struct RunConfig {
  std::string vocabulary_path;
  std::string topology_path;
  std::optional<bool> edges;  // overrides the topology file
  RewardSpec reward;
  bool memoize = true;
  ExternalAdapterConfig external;
  TrainConfig train;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 256;
  std::size_t workers = 1;

  static RunConfig parse(std::string_view text, const std::string& source, const std::string& base_dir);
  static RunConfig load(const std::string& path);

  // Applies one key; `where` prefixes diagnostics. Throws ValidationError.
  void set(const std::string& key, std::string_view value, const std::string& where);
  void validate() const;

  AssemblyEnv build_environment() const;
  std::unique_ptr<RewardFunction> build_reward() const;
  FlowModelConfig model_config(std::size_t vocab_size) const;
  nlohmann::json to_json() const;

 private:
  std::string base_dir_;
};

}  // namespace reticgen
