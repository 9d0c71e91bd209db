#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "reticgen/environment.hpp"

namespace reticgen {

enum class EvaluatorKind { surrogate, external };

struct RewardSpec {
  double cutoff = 5000.0;                 // C, m²/g
  EvaluatorKind evaluator = EvaluatorKind::surrogate;
  double reward_floor = 1e-6;             // only used inside the loss
  double surrogate_scale = 6022.14076;    // Å²/(g/mol) -> m²/g, i.e. N_A * 1e-20

  void validate() const;
};

// Gravimetric surface area in m²/g, or the reason it could not be computed.
struct GsaResult {
  std::optional<double> value;
  std::string error;

  static GsaResult ok(double v) { return {v, {}}; }
  static GsaResult failure(std::string why) { return {std::nullopt, std::move(why)}; }
  bool has_value() const { return value.has_value(); }
};

// Heaviside-gated exponential: 0 below the cutoff or on evaluation error,
// exp((gsa - C) / C) at and above it.
double reward(const RewardSpec& spec, const GsaResult& gsa);

// max(reward, floor); keeps log R finite in the trajectory-balance loss.
double loss_reward(const RewardSpec& spec, double reward_value);

GsaResult surrogate_gsa(const Vocabulary& vocabulary, const std::vector<int>& sequence, double scale);

struct ExternalAdapterConfig {
  std::string command;  // run through /bin/sh -c
  // Appended to the command. Defaults carry the Zeo++ probe settings.
  std::vector<std::string> arguments{"--probe-radius", "1.525", "--samples", "2000"};
  std::chrono::milliseconds timeout{60000};
  std::size_t workers = 4;
};

// Sends the assembly record on stdin and reads one decimal from stdout.
// Every failure mode (spawn error, non-zero exit, timeout, junk output) comes
// back as an error result; this never throws.
GsaResult external_gsa(const ExternalAdapterConfig& config, std::string_view assembly_record);

class GsaEvaluator {
 public:
  virtual ~GsaEvaluator() = default;
  virtual GsaResult evaluate(const AssemblyEnv& env, const std::vector<int>& sequence) const = 0;
};

class SurrogateEvaluator final : public GsaEvaluator {
 public:
  explicit SurrogateEvaluator(double scale) : scale_(scale) {}
  GsaResult evaluate(const AssemblyEnv& env, const std::vector<int>& sequence) const override;

 private:
  double scale_;
};

class ExternalEvaluator final : public GsaEvaluator {
 public:
  explicit ExternalEvaluator(ExternalAdapterConfig config) : config_(std::move(config)) {}
  GsaResult evaluate(const AssemblyEnv& env, const std::vector<int>& sequence) const override;
  const ExternalAdapterConfig& config() const { return config_; }

 private:
  ExternalAdapterConfig config_;
};

struct RewardEvaluation {
  GsaResult gsa;
  double reward = 0.0;
};

// Reward spec + GSA evaluator + optional memo keyed by assembly record.
// Thread-safe.
class RewardFunction {
 public:
  RewardFunction(RewardSpec spec, std::shared_ptr<const GsaEvaluator> evaluator, bool memoize = true,
                 std::size_t workers = 1);

  static RewardFunction surrogate(RewardSpec spec, bool memoize = true);

  const RewardSpec& spec() const { return spec_; }
  RewardEvaluation evaluate(const AssemblyEnv& env, const std::vector<int>& sequence) const;
  // Results are in input order whatever the worker count.
  std::vector<RewardEvaluation> evaluate_batch(const AssemblyEnv& env,
                                               const std::vector<std::vector<int>>& sequences) const;
  std::size_t evaluations() const;  // evaluator calls actually made

 private:
  RewardSpec spec_;
  std::shared_ptr<const GsaEvaluator> evaluator_;
  bool memoize_;
  std::size_t workers_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, RewardEvaluation> memo_;
  mutable std::size_t calls_ = 0;
};

}  // namespace reticgen
