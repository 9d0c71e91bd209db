#include "reticgen/reward.hpp"

#include <cmath>
#include <thread>

#include "reticgen/error.hpp"
#include "reticgen/text.hpp"
#include "subprocess.hpp"

namespace reticgen {

void RewardSpec::validate() const {
  if (!(cutoff > 0.0) || !std::isfinite(cutoff)) throw ValidationError("reward: cutoff must be positive");
  if (!(reward_floor > 0.0 && reward_floor < 1.0)) throw ValidationError("reward: floor must lie in (0, 1)");
  if (!(surrogate_scale > 0.0) || !std::isfinite(surrogate_scale)) {
    throw ValidationError("reward: surrogate scale must be positive");
  }
}

double reward(const RewardSpec& spec, const GsaResult& gsa) {
  if (!gsa.value) return 0.0;
  const double g = *gsa.value;
  if (!(g >= spec.cutoff)) return 0.0;  // also catches NaN
  return std::exp((g - spec.cutoff) / spec.cutoff);
}

double loss_reward(const RewardSpec& spec, double reward_value) {
  if (reward_value < 0.0) throw ContractError("loss_reward: negative reward");
  return std::max(reward_value, spec.reward_floor);
}

GsaResult surrogate_gsa(const Vocabulary& vocabulary, const std::vector<int>& sequence, double scale) {
  double surface = 0.0, mass = 0.0;
  for (int t : sequence) {
    const auto& b = vocabulary[static_cast<std::size_t>(t)];
    surface += b.surface;
    mass += b.mass;
  }
  if (!(mass > 0.0)) return GsaResult::failure("surrogate: total mass is zero");
  return GsaResult::ok(scale * surface / mass);
}

namespace {

std::string shell_quote(const std::string& arg) {
  std::string out = "'";
  for (char c : arg) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

}  // namespace

GsaResult external_gsa(const ExternalAdapterConfig& config, std::string_view assembly_record) {
  if (config.command.empty()) return GsaResult::failure("external adapter: no command configured");
  std::string command = config.command;
  for (const auto& a : config.arguments) command += " " + shell_quote(a);
  std::string input(assembly_record);
  input += '\n';
  detail::ProcessResult run;
  try {
    run = detail::run_process(command, input, config.timeout);
  } catch (const std::exception& e) {
    return GsaResult::failure(std::string("external adapter: ") + e.what());
  }
  if (!run.launched) return GsaResult::failure("external adapter: launch failed: " + run.error);
  if (run.timed_out) {
    return GsaResult::failure("external adapter: timed out after " + std::to_string(config.timeout.count()) + " ms");
  }
  if (!run.error.empty()) return GsaResult::failure("external adapter: " + run.error);
  if (run.exit_code != 0) {
    return GsaResult::failure("external adapter: exit status " + std::to_string(run.exit_code));
  }
  const auto first_line = text::lines(run.output);
  if (first_line.empty()) return GsaResult::failure("external adapter: empty output");
  const auto value = text::parse_double(first_line.front());
  if (!value || !std::isfinite(*value) || *value < 0.0) {
    return GsaResult::failure("external adapter: unparseable output '" + std::string(text::trim(first_line.front())) +
                              "'");
  }
  return GsaResult::ok(*value);
}

GsaResult SurrogateEvaluator::evaluate(const AssemblyEnv& env, const std::vector<int>& sequence) const {
  return surrogate_gsa(env.vocabulary(), sequence, scale_);
}

GsaResult ExternalEvaluator::evaluate(const AssemblyEnv& env, const std::vector<int>& sequence) const {
  try {
    return external_gsa(config_, env.to_record(sequence));
  } catch (const std::exception& e) {
    return GsaResult::failure(std::string("external adapter: ") + e.what());
  }
}

RewardFunction::RewardFunction(RewardSpec spec, std::shared_ptr<const GsaEvaluator> evaluator, bool memoize,
                               std::size_t workers)
    : spec_(spec), evaluator_(std::move(evaluator)), memoize_(memoize), workers_(std::max<std::size_t>(workers, 1)) {
  spec_.validate();
  if (!evaluator_) throw ValidationError("reward: no evaluator");
}

RewardFunction RewardFunction::surrogate(RewardSpec spec, bool memoize) {
  auto eval = std::make_shared<SurrogateEvaluator>(spec.surrogate_scale);
  return RewardFunction(spec, std::move(eval), memoize, 1);
}

RewardEvaluation RewardFunction::evaluate(const AssemblyEnv& env, const std::vector<int>& sequence) const {
  std::string key;
  if (memoize_) {
    key = env.to_record(sequence);
    std::lock_guard lock(mutex_);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  }
  RewardEvaluation out;
  try {
    out.gsa = evaluator_->evaluate(env, sequence);
  } catch (const std::exception& e) {
    out.gsa = GsaResult::failure(e.what());
  }
  out.reward = reward(spec_, out.gsa);
  std::lock_guard lock(mutex_);
  ++calls_;
  if (memoize_) memo_.emplace(key, out);
  return out;
}

std::vector<RewardEvaluation> RewardFunction::evaluate_batch(const AssemblyEnv& env,
                                                             const std::vector<std::vector<int>>& sequences) const {
  std::vector<RewardEvaluation> out(sequences.size());
  const std::size_t workers = std::min(workers_, sequences.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < sequences.size(); ++i) out[i] = evaluate(env, sequences[i]);
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < sequences.size(); i += workers) out[i] = evaluate(env, sequences[i]);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

std::size_t RewardFunction::evaluations() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

}  // namespace reticgen
