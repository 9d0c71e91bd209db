#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reticgen/environment.hpp"
#include "reticgen/policy.hpp"
#include "reticgen/reward.hpp"

namespace reticgen::analysis {

// ---- regression ---------------------------------------------------------

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double rmse = 0.0;
  double spearman = 0.0;
};

struct CrossValidationSummary {
  double test_r2_mean = 0.0, test_r2_std = 0.0;
  double test_rmse_mean = 0.0, test_rmse_std = 0.0;
  double train_r2_mean = 0.0, train_r2_std = 0.0;
  double train_rmse_mean = 0.0, train_rmse_std = 0.0;
  std::size_t evaluations = 0;        // held-out sets scored
  std::size_t r2_skipped = 0;         // held-out sets with constant y (r² undefined)
};

struct RegressionReport {
  LinearFit fit;
  CrossValidationSummary cv;
};

enum class SplitMode { k_fold, holdout };

struct CrossValidationOptions {
  std::size_t folds = 10;
  std::size_t rounds = 50;
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::k_fold;
  double holdout_fraction = 0.2;  // holdout mode only
};

// Ordinary least squares y = slope * x + intercept with r², rmse and
// Spearman's rho on the full set. Requires n >= 3 and non-constant x.
LinearFit fit_univariate(std::span<const double> x, std::span<const double> y);

// Per round a fresh shuffle; per fold a fit on the complement, scored on the
// held-out part. Holdout mode does one random split per round.
CrossValidationSummary cross_validate(std::span<const double> x, std::span<const double> y,
                                      const CrossValidationOptions& options);

std::vector<double> average_ranks(std::span<const double> values);  // 1-based, ties averaged
double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

// Fraction of references strictly below value, times 100.
double percentile_rank(double value, std::span<const double> references);

// ---- capture metrics ---------------------------------------------------

struct GasFractions {
  double co2 = 0.15;
  double n2 = 0.85;
};

struct IsothermRow {
  std::string material;
  double co2_high = 0.0;      // single-component CO2 uptake at 16 bar, mol/kg
  double co2_low = 0.0;       // single-component CO2 uptake at 0.15 bar
  double co2_mixture = 0.0;   // CO2 uptake at 0.15 bar, binary flue-gas run
  double n2_mixture = 0.0;    // N2 uptake at 0.15 bar, binary flue-gas run
};

struct WorkingCapacity {
  double value = 0.0;
  bool suspect = false;  // negative: desorption uptake exceeds adsorption
};

WorkingCapacity working_capacity(const IsothermRow& row);
// nullopt when the N2 uptake is zero.
std::optional<double> selectivity(const IsothermRow& row, const GasFractions& fractions = {});

std::vector<IsothermRow> load_isotherms(const std::string& path);

// ---- exact flows ---------------------------------------------------------

// Flow of every reachable state of an enumerable environment, built from
// the loss reward max(R, floor): F(terminal) = loss reward, F(s) = sum of
// children. The policy P(a|s) = F(s+a) / F(s) with logZ = log F(root) has
// zero trajectory-balance loss.
class ExactFlows final : public Policy {
 public:
  ExactFlows(const AssemblyEnv& env, const RewardFunction& reward_fn, double bound = 1e6);

  std::unique_ptr<PolicyCursor> start() const override;
  double log_z() const override;
  std::size_t vocab_size() const override { return env_.vocab_size(); }

  double flow(const std::vector<int>& prefix) const;  // 0 for unknown prefixes
  const std::map<std::vector<int>, double>& flows() const { return flows_; }
  const std::vector<std::vector<int>>& terminals() const { return terminals_; }
  const std::vector<double>& terminal_rewards() const { return rewards_; }  // unfloored

 private:
  const AssemblyEnv& env_;
  std::map<std::vector<int>, double> flows_;
  std::vector<std::vector<int>> terminals_;
  std::vector<double> rewards_;
};

// Probability of each terminal of `env` under `policy`, by enumeration.
std::vector<double> terminal_distribution(const Policy& policy, const AssemblyEnv& env, double bound = 1e6);

// ---- baseline comparison --------------------------------------------------

struct SamplerSummary {
  double mean_reward = 0.0;
  double max_reward = 0.0;
  double reward_std = 0.0;
  std::vector<std::int64_t> histogram;
};

struct BaselineSummary {
  std::int64_t samples = 0;
  SamplerSummary trained;
  SamplerSummary random;
  std::vector<double> bin_edges;  // histogram.size() + 1 edges
  double welch_t = 0.0;
  double p_value = 1.0;  // two-sided, normal approximation
};

// Samples the trained policy and a uniform-random policy n times each from
// split RNG streams of `seed`.
BaselineSummary baseline_comparison(const Policy& trained, const AssemblyEnv& env, const RewardFunction& reward_fn,
                                    std::int64_t n, std::uint64_t seed, std::size_t workers = 1,
                                    std::size_t bins = 20);

// sampler,samples,mean_reward,reward_std,max_reward plus the Welch statistic.
std::string baseline_csv(const BaselineSummary& summary);
// bin_lower,bin_upper,trained_count,random_count
std::string baseline_histogram_csv(const BaselineSummary& summary);

}  // namespace reticgen::analysis
