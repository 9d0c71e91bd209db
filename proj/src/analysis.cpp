#include "reticgen/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reticgen/csv.hpp"
#include "reticgen/dataset.hpp"
#include "reticgen/error.hpp"
#include "reticgen/flow_model.hpp"
#include "reticgen/rng.hpp"
#include "reticgen/sampler.hpp"
#include "reticgen/text.hpp"

namespace reticgen::analysis {

namespace {

struct Ols {
  double slope = 0.0, intercept = 0.0;
};

Ols ols(std::span<const double> x, std::span<const double> y, std::span<const std::size_t> idx) {
  if (idx.size() < 2) throw DegenerateInputError("regression: need at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i : idx) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(idx.size());
  my /= static_cast<double>(idx.size());
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i : idx) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DegenerateInputError("regression: x is constant");
  Ols fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

struct Score {
  std::optional<double> r2;
  double rmse = 0.0;
};

Score score(const Ols& fit, std::span<const double> x, std::span<const double> y, std::span<const std::size_t> idx) {
  double my = 0.0;
  for (std::size_t i : idx) my += y[i];
  my /= static_cast<double>(idx.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i : idx) {
    const double e = y[i] - (fit.slope * x[i] + fit.intercept);
    ss_res += e * e;
    ss_tot += (y[i] - my) * (y[i] - my);
  }
  Score s;
  s.rmse = std::sqrt(ss_res / static_cast<double>(idx.size()));
  if (ss_tot > 0.0) s.r2 = 1.0 - ss_res / ss_tot;
  return s;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

void require_paired(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DegenerateInputError("regression: x and y differ in length");
}

}  // namespace

LinearFit fit_univariate(std::span<const double> x, std::span<const double> y) {
  require_paired(x, y);
  if (x.size() < 3) throw DegenerateInputError("regression: need at least three points");
  std::vector<std::size_t> all(x.size());
  std::iota(all.begin(), all.end(), 0);
  const Ols o = ols(x, y, all);
  const Score s = score(o, x, y, all);
  LinearFit fit;
  fit.slope = o.slope;
  fit.intercept = o.intercept;
  fit.r2 = s.r2.value_or(1.0);  // constant y is fitted exactly by slope 0
  fit.rmse = s.rmse;
  fit.spearman = spearman(x, y);
  return fit;
}

CrossValidationSummary cross_validate(std::span<const double> x, std::span<const double> y,
                                      const CrossValidationOptions& opt) {
  require_paired(x, y);
  const std::size_t n = x.size();
  if (opt.rounds == 0) throw DegenerateInputError("cross-validation: rounds must be positive");
  if (opt.mode == SplitMode::k_fold) {
    if (opt.folds < 2) throw DegenerateInputError("cross-validation: need at least two folds");
    if (opt.folds > n) {
      throw DegenerateInputError("cross-validation: " + std::to_string(opt.folds) + " folds exceed " +
                                 std::to_string(n) + " samples");
    }
  } else if (!(opt.holdout_fraction > 0.0 && opt.holdout_fraction < 1.0) || n < 3) {
    throw DegenerateInputError("cross-validation: holdout needs a fraction in (0, 1) and at least three samples");
  }

  std::vector<double> test_r2, test_rmse, train_r2, train_rmse;
  CrossValidationSummary out;
  std::vector<std::size_t> perm(n);
  for (std::size_t round = 0; round < opt.rounds; ++round) {
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng = Rng::derive(opt.seed, round);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_index(i)]);

    std::vector<std::pair<std::size_t, std::size_t>> splits;  // [begin, end) of held-out part
    if (opt.mode == SplitMode::k_fold) {
      for (std::size_t f = 0; f < opt.folds; ++f) splits.emplace_back(f * n / opt.folds, (f + 1) * n / opt.folds);
    } else {
      auto held = static_cast<std::size_t>(std::llround(opt.holdout_fraction * static_cast<double>(n)));
      held = std::clamp<std::size_t>(held, 1, n - 2);
      splits.emplace_back(0, held);
    }
    for (auto [begin, end] : splits) {
      std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(begin),
                                    perm.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<std::size_t> train;
      train.reserve(n - test.size());
      for (std::size_t i = 0; i < n; ++i) {
        if (i < begin || i >= end) train.push_back(perm[i]);
      }
      const Ols o = ols(x, y, train);
      const Score te = score(o, x, y, test);
      const Score tr = score(o, x, y, train);
      ++out.evaluations;
      test_rmse.push_back(te.rmse);
      train_rmse.push_back(tr.rmse);
      if (te.r2) {
        test_r2.push_back(*te.r2);
      } else {
        ++out.r2_skipped;
      }
      if (tr.r2) train_r2.push_back(*tr.r2);
    }
  }
  std::tie(out.test_r2_mean, out.test_r2_std) = mean_std(test_r2);
  std::tie(out.test_rmse_mean, out.test_rmse_std) = mean_std(test_rmse);
  std::tie(out.train_r2_mean, out.train_r2_std) = mean_std(train_r2);
  std::tie(out.train_rmse_mean, out.train_rmse_std) = mean_std(train_rmse);
  return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  require_paired(x, y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nan("");
  return sxy / std::sqrt(sxx * syy);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  require_paired(x, y);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

double percentile_rank(double value, std::span<const double> references) {
  if (references.empty()) throw DegenerateInputError("percentile_rank: empty reference set");
  std::size_t below = 0;
  for (double r : references) below += r < value ? 1 : 0;
  return 100.0 * static_cast<double>(below) / static_cast<double>(references.size());
}

// ---- capture -------------------------------------------------------------

WorkingCapacity working_capacity(const IsothermRow& row) {
  WorkingCapacity wc;
  wc.value = row.co2_high - row.co2_low;
  wc.suspect = wc.value < 0.0;
  return wc;
}

std::optional<double> selectivity(const IsothermRow& row, const GasFractions& fractions) {
  if (!(row.n2_mixture > 0.0)) return std::nullopt;
  return (row.co2_mixture / row.n2_mixture) / (fractions.co2 / fractions.n2);
}

std::vector<IsothermRow> load_isotherms(const std::string& path) {
  const auto table = csv::load(path);
  const auto c_id = table.require_column("material", path);
  const auto c_hi = table.require_column("co2_uptake_16bar", path);
  const auto c_lo = table.require_column("co2_uptake_0.15bar", path);
  const auto c_mc = table.require_column("co2_mixture_0.15bar", path);
  const auto c_mn = table.require_column("n2_mixture_0.15bar", path);
  std::vector<IsothermRow> rows;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& f = table.rows[r];
    auto num = [&](std::size_t c) {
      const auto v = text::parse_double(f[c]);
      if (!v || *v < 0.0 || !std::isfinite(*v)) {
        throw ValidationError(path + ":" + std::to_string(table.line_numbers[r]) + ": column '" + table.header[c] +
                              "' needs a non-negative uptake, got '" + f[c] + "'");
      }
      return *v;
    };
    rows.push_back({f[c_id], num(c_hi), num(c_lo), num(c_mc), num(c_mn)});
  }
  return rows;
}

// ---- exact flows ---------------------------------------------------------

namespace {

class TabularCursor final : public PolicyCursor {
 public:
  explicit TabularCursor(const ExactFlows& flows, const AssemblyEnv& env) : flows_(flows), env_(env) {}

  std::vector<double> logits() const override {
    std::vector<double> out(env_.vocab_size(), -std::numeric_limits<double>::infinity());
    const AssemblyState state{prefix_};
    if (env_.is_terminal(state)) return out;
    const double parent = flows_.flow(prefix_);
    auto child = prefix_;
    child.push_back(0);
    for (int a : env_.slot(prefix_.size()).compatible) {
      child.back() = a;
      const double f = flows_.flow(child);
      if (f > 0.0) out[static_cast<std::size_t>(a)] = std::log(f) - std::log(parent);
    }
    return out;
  }
  void advance(int token) override { prefix_.push_back(token); }

 private:
  const ExactFlows& flows_;
  const AssemblyEnv& env_;
  std::vector<int> prefix_;
};

}  // namespace

ExactFlows::ExactFlows(const AssemblyEnv& env, const RewardFunction& reward_fn, double bound) : env_(env) {
  terminals_ = env.enumerate_terminals(bound);
  const auto& spec = reward_fn.spec();
  for (const auto& x : terminals_) {
    const double r = reward_fn.evaluate(env, x).reward;
    rewards_.push_back(r);
    const double f = loss_reward(spec, r);
    std::vector<int> prefix;
    flows_[prefix] += f;
    for (int t : x) {
      prefix.push_back(t);
      flows_[prefix] += f;
    }
  }
}

double ExactFlows::flow(const std::vector<int>& prefix) const {
  auto it = flows_.find(prefix);
  return it == flows_.end() ? 0.0 : it->second;
}

double ExactFlows::log_z() const { return std::log(flow({})); }

std::unique_ptr<PolicyCursor> ExactFlows::start() const { return std::make_unique<TabularCursor>(*this, env_); }

std::vector<double> terminal_distribution(const Policy& policy, const AssemblyEnv& env, double bound) {
  const auto terminals = env.enumerate_terminals(bound);
  CachedPolicy cached(policy);
  std::vector<double> out;
  out.reserve(terminals.size());
  for (const auto& x : terminals) {
    double lp = 0.0;
    for (double v : replay_log_probs(cached, env, x)) lp += v;
    out.push_back(std::exp(lp));
  }
  return out;
}

// ---- baseline ------------------------------------------------------------

namespace {

SamplerSummary summarize(const std::vector<CandidateRecord>& records, std::int64_t n) {
  SamplerSummary s;
  if (n == 0) return s;
  double sum = 0.0;
  for (const auto& r : records) {
    sum += static_cast<double>(r.sample_count) * r.reward;
    s.max_reward = std::max(s.max_reward, r.reward);
  }
  s.mean_reward = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& r : records) {
    ss += static_cast<double>(r.sample_count) * (r.reward - s.mean_reward) * (r.reward - s.mean_reward);
  }
  s.reward_std = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  return s;
}

std::vector<std::int64_t> histogram(const std::vector<CandidateRecord>& records, const std::vector<double>& edges) {
  const std::size_t bins = edges.size() - 1;
  std::vector<std::int64_t> counts(bins, 0);
  const double lo = edges.front(), hi = edges.back();
  for (const auto& r : records) {
    auto b = static_cast<std::size_t>((r.reward - lo) / (hi - lo) * static_cast<double>(bins));
    b = std::min(b, bins - 1);
    counts[b] += r.sample_count;
  }
  return counts;
}

}  // namespace

BaselineSummary baseline_comparison(const Policy& trained, const AssemblyEnv& env, const RewardFunction& reward_fn,
                                    std::int64_t n, std::uint64_t seed, std::size_t workers, std::size_t bins) {
  if (bins == 0) throw ContractError("baseline: need at least one histogram bin");
  CachedPolicy cached(trained);
  UniformPolicy uniform(env.vocab_size());
  GenerateOptions opt;
  opt.workers = workers;
  const auto trained_records = generate(cached, env, reward_fn, n, Rng::derive(seed, 1).next_u64(), opt);
  const auto random_records = generate(uniform, env, reward_fn, n, Rng::derive(seed, 2).next_u64(), opt);

  BaselineSummary out;
  out.samples = n;
  out.trained = summarize(trained_records, n);
  out.random = summarize(random_records, n);
  const double top = std::max(out.trained.max_reward, out.random.max_reward);
  const double hi = top > 0.0 ? top : 1.0;
  for (std::size_t b = 0; b <= bins; ++b) out.bin_edges.push_back(hi * static_cast<double>(b) / static_cast<double>(bins));
  out.trained.histogram = histogram(trained_records, out.bin_edges);
  out.random.histogram = histogram(random_records, out.bin_edges);

  const double va = out.trained.reward_std * out.trained.reward_std / static_cast<double>(std::max<std::int64_t>(n, 1));
  const double vb = out.random.reward_std * out.random.reward_std / static_cast<double>(std::max<std::int64_t>(n, 1));
  const double diff = out.trained.mean_reward - out.random.mean_reward;
  if (va + vb > 0.0) {
    out.welch_t = diff / std::sqrt(va + vb);
    out.p_value = std::erfc(std::abs(out.welch_t) / std::sqrt(2.0));
  } else {
    out.welch_t = 0.0;
    out.p_value = diff == 0.0 ? 1.0 : 0.0;
  }
  return out;
}

std::string baseline_csv(const BaselineSummary& s) {
  std::string out = "sampler,samples,mean_reward,reward_std,max_reward,welch_t,p_value\n";
  for (const auto& [name, sum] : {std::pair<const char*, const SamplerSummary*>{"gflownet", &s.trained},
                                  std::pair<const char*, const SamplerSummary*>{"random", &s.random}}) {
    out += csv::row({name, std::to_string(s.samples), text::format_double(sum->mean_reward),
                     text::format_double(sum->reward_std), text::format_double(sum->max_reward),
                     text::format_double(s.welch_t), text::format_double(s.p_value)});
    out += '\n';
  }
  return out;
}

std::string baseline_histogram_csv(const BaselineSummary& s) {
  std::string out = "bin_lower,bin_upper,trained_count,random_count\n";
  for (std::size_t b = 0; b + 1 < s.bin_edges.size(); ++b) {
    out += csv::row({text::format_double(s.bin_edges[b]), text::format_double(s.bin_edges[b + 1]),
                     std::to_string(s.trained.histogram[b]), std::to_string(s.random.histogram[b])});
    out += '\n';
  }
  return out;
}

}  // namespace reticgen::analysis
