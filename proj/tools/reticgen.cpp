// reticgen command-line entry point.
//
// Exit codes: 0 success, 1 runtime failure, 2 validation failure.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "reticgen/analysis.hpp"
#include "reticgen/checkpoint.hpp"
#include "reticgen/config.hpp"
#include "reticgen/crystal.hpp"
#include "reticgen/csv.hpp"
#include "reticgen/dataset.hpp"
#include "reticgen/error.hpp"
#include "reticgen/sampler.hpp"
#include "reticgen/text.hpp"
#include "reticgen/trainer.hpp"

namespace fs = std::filesystem;
using namespace reticgen;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string out = "reticgen-out";
};

std::string out_path(const Globals& g, const std::string& name) { return (fs::path(g.out) / name).string(); }

void prepare_out(const Globals& g) {
  std::error_code ec;
  fs::create_directories(g.out, ec);
  if (ec) throw ValidationError("cannot create output directory '" + g.out + "': " + ec.message());
}

void write_manifest(const Globals& g, const std::string& command, json body) {
  body["command"] = command;
  body["format"] = 1;
  text::write_file_atomic(out_path(g, command + "_manifest.json"), body.dump(2) + "\n");
}

std::size_t worker_count(const Globals& g, std::size_t fallback) { return std::max<std::size_t>(1, g.workers.value_or(fallback)); }

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides, const Globals& g) {
  RunConfig cfg = RunConfig::load(path);
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + item + "'");
    cfg.set(std::string(text::trim(item.substr(0, eq))), item.substr(eq + 1), "--set " + item);
  }
  if (g.seed) cfg.train.seed = *g.seed;
  if (g.workers) cfg.workers = std::max<std::size_t>(1, *g.workers);
  cfg.validate();
  return cfg;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

// Loads a model checkpoint and checks it was trained on this environment.
FlowModel load_model(const std::string& path, const AssemblyEnv& env, std::string* hash) {
  const std::string bytes = text::read_file(path);
  Checkpoint ck;
  try {
    ck = decode_checkpoint(bytes);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
  const auto fp = ck.meta.find("environment_fingerprint");
  if (fp == ck.meta.end() || !fp->is_number_unsigned() || fp->get<std::uint64_t>() != env.fingerprint()) {
    throw ValidationError(path + ": checkpoint was trained on a different environment");
  }
  FlowModel model = model_from_checkpoint(ck);
  if (model.vocab_size() != env.vocab_size()) throw ValidationError(path + ": vocabulary size mismatch");
  if (hash) *hash = hex64(fnv1a64(bytes));
  return model;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string resume;
  std::optional<std::int64_t> halt_after;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  RunConfig cfg = load_config(a.config, a.overrides, g);
  const AssemblyEnv env = cfg.build_environment();
  const auto reward_fn = cfg.build_reward();
  prepare_out(g);

  json manifest{{"config_file", a.config}, {"config", cfg.to_json()}, {"seed", cfg.train.seed},
                {"environment_fingerprint", hex64(env.fingerprint())}};
  std::optional<Trainer> trainer;
  if (!a.resume.empty()) {
    const Checkpoint ck = load_checkpoint(a.resume);
    trainer.emplace(ck, env, *reward_fn);
    manifest["resumed_from"] = a.resume;
    manifest["resumed_at_episode"] = trainer->episode();
    manifest["config"]["train"] = trainer->config().to_json();
    manifest["seed"] = trainer->config().seed;
  } else {
    Rng init = Rng::derive(cfg.train.seed, 0x6d6f64656cULL);
    trainer.emplace(cfg.train, FlowModel::initialized(cfg.model_config(env.vocab_size()), init), env, *reward_fn);
  }
  if (a.halt_after) manifest["halt_after"] = *a.halt_after;
  write_manifest(g, "train", manifest);

  const std::string metrics_path = out_path(g, "metrics.csv");
  CsvMetricsWriter metrics(metrics_path, !a.resume.empty() && fs::exists(metrics_path));
  trainer->set_checkpoint_path(out_path(g, "checkpoint.bin"));
  const TrainOutcome outcome = trainer->run(&metrics, a.halt_after);

  std::cout << "episodes " << outcome.episodes << ", stopped by " << to_string(outcome.reason) << ", logZ "
            << text::format_double(trainer->model().log_z()) << "\n";
  return 0;
}

// ---- sample ----------------------------------------------------------------

struct SampleArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string checkpoint;
  std::int64_t n = 1000;
  std::size_t top_k = 0;
  double epsilon = 0.0;
};

int cmd_sample(const Globals& g, const SampleArgs& a) {
  if (a.n < 0) throw ValidationError("--n must be non-negative");
  RunConfig cfg = load_config(a.config, a.overrides, g);
  const AssemblyEnv env = cfg.build_environment();
  const auto reward_fn = cfg.build_reward();
  std::string hash;
  const FlowModel model = load_model(a.checkpoint, env, &hash);
  const std::uint64_t seed = g.seed.value_or(0);
  prepare_out(g);
  write_manifest(g, "sample", {{"config_file", a.config}, {"config", cfg.to_json()}, {"checkpoint", a.checkpoint},
                               {"checkpoint_fnv1a64", hash}, {"seed", seed}, {"n_samples", a.n},
                               {"exploration_epsilon", a.epsilon}, {"top_k", a.top_k}});

  CachedPolicy cached(model);
  GenerateOptions opt;
  opt.workers = cfg.workers;
  opt.exploration_epsilon = a.epsilon;
  const auto records = generate(cached, env, *reward_fn, a.n, seed, opt);
  text::write_file_atomic(out_path(g, "dataset.csv"), dataset_csv(records));
  if (a.top_k > 0) {
    bool truncated = false;
    const auto best = top_k(records, a.top_k, &truncated);
    if (truncated) {
      std::cerr << "warning: top-k of " << a.top_k << " requested but only " << records.size()
                << " distinct candidates exist\n";
    }
    text::write_file_atomic(out_path(g, "top_k.csv"), dataset_csv(best));
  }
  std::size_t failures = 0;
  for (const auto& r : records) failures += r.gsa.has_value() ? 0 : 1;
  std::cout << a.n << " samples, " << records.size() << " distinct, " << (a.n - static_cast<std::int64_t>(records.size()))
            << " duplicates merged, " << failures << " evaluation failures\n";
  return 0;
}

// ---- amd -------------------------------------------------------------------

struct AmdArgs {
  std::string cif_dir;
  std::string reference_dir;
  std::size_t k = 100;
};

struct Descriptor {
  std::string id;
  std::vector<double> values;
};

// Descriptors of every *.cif in `dir`, in file-name order. Files that fail are
// reported and skipped.
std::vector<Descriptor> describe_directory(const std::string& dir, std::size_t k, std::size_t workers) {
  if (!fs::is_directory(dir)) throw ValidationError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && text::lowercase(entry.path().extension().string()) == ".cif") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  std::vector<std::optional<std::vector<double>>> results(files.size());
  std::vector<std::string> errors(files.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < files.size(); i = next++) {
      try {
        results[i] = crystal::amd(crystal::load_cif(files[i].string()), k);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::min(workers, files.size()); ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  std::vector<Descriptor> out;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (results[i]) {
      out.push_back({files[i].stem().string(), std::move(*results[i])});
    } else {
      std::cerr << "warning: skipping " << files[i].string() << ": " << errors[i] << "\n";
    }
  }
  return out;
}

int cmd_amd(const Globals& g, const AmdArgs& a) {
  if (a.k == 0) throw ValidationError("--k must be at least 1");
  const std::size_t workers = worker_count(g, 1);
  prepare_out(g);
  write_manifest(g, "amd", {{"cif_dir", a.cif_dir}, {"reference_dir", a.reference_dir}, {"k", a.k}});
  const auto described = describe_directory(a.cif_dir, a.k, workers);

  std::string out = "file";
  for (std::size_t j = 1; j <= a.k; ++j) out += ",amd_" + std::to_string(j);
  out += '\n';
  for (const auto& d : described) {
    std::vector<std::string> row{d.id};
    for (double v : d.values) row.push_back(text::format_double(v));
    out += csv::row(row) + '\n';
  }
  text::write_file_atomic(out_path(g, "amd.csv"), out);

  std::vector<std::vector<double>> values;
  std::vector<std::string> header{"file"};
  for (const auto& d : described) {
    values.push_back(d.values);
    header.push_back(d.id);
  }
  const auto matrix = crystal::descriptor_distance_matrix(values);
  out = csv::row(header) + '\n';
  for (std::size_t i = 0; i < described.size(); ++i) {
    std::vector<std::string> row{described[i].id};
    for (double v : matrix[i]) row.push_back(text::format_double(v));
    out += csv::row(row) + '\n';
  }
  text::write_file_atomic(out_path(g, "distances.csv"), out);

  if (!a.reference_dir.empty()) {
    const auto refs = describe_directory(a.reference_dir, a.k, workers);
    if (refs.empty()) throw ValidationError("reference directory holds no readable CIF files: " + a.reference_dir);
    out = "file,nearest_reference,distance\n";
    for (const auto& d : described) {
      std::size_t best = 0;
      double best_d = crystal::euclidean(d.values, refs[0].values);
      for (std::size_t r = 1; r < refs.size(); ++r) {
        const double dist = crystal::euclidean(d.values, refs[r].values);
        if (dist < best_d) {
          best_d = dist;
          best = r;
        }
      }
      out += csv::row({d.id, refs[best].id, text::format_double(best_d)}) + '\n';
    }
    text::write_file_atomic(out_path(g, "novelty.csv"), out);
  }
  std::cout << described.size() << " descriptors of length " << a.k << "\n";
  return 0;
}

// ---- regress ---------------------------------------------------------------

struct RegressArgs {
  std::string csv;
  std::string x_column = "gsa";
  std::string y_column = "uptake";
  std::size_t folds = 10;
  std::size_t rounds = 50;
  std::string mode = "kfold";
  double holdout = 0.2;
};

std::vector<double> numeric_column(const csv::Table& t, std::size_t col, const std::string& source) {
  std::vector<double> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto v = text::parse_double(t.rows[r][col]);
    if (!v) {
      throw ValidationError(source + ":" + std::to_string(t.line_numbers[r]) + ": column '" + t.header[col] +
                            "' is not numeric: '" + t.rows[r][col] + "'");
    }
    out.push_back(*v);
  }
  return out;
}

int cmd_regress(const Globals& g, const RegressArgs& a) {
  const auto table = csv::load(a.csv);
  const auto x = numeric_column(table, table.require_column(a.x_column, a.csv), a.csv);
  const auto y = numeric_column(table, table.require_column(a.y_column, a.csv), a.csv);
  analysis::CrossValidationOptions opt;
  opt.folds = a.folds;
  opt.rounds = a.rounds;
  opt.seed = g.seed.value_or(0);
  opt.holdout_fraction = a.holdout;
  if (a.mode == "kfold") {
    opt.mode = analysis::SplitMode::k_fold;
  } else if (a.mode == "holdout") {
    opt.mode = analysis::SplitMode::holdout;
  } else {
    throw ValidationError("--mode must be kfold or holdout");
  }
  prepare_out(g);
  write_manifest(g, "regress", {{"csv", a.csv}, {"x", a.x_column}, {"y", a.y_column}, {"folds", a.folds},
                                {"rounds", a.rounds}, {"mode", a.mode}, {"holdout_fraction", a.holdout},
                                {"seed", opt.seed}});
  const auto fit = analysis::fit_univariate(x, y);
  const auto cv = analysis::cross_validate(x, y, opt);

  auto f = [](double v) { return text::format_double(v); };
  std::string out = "metric,value\n";
  const std::vector<std::pair<std::string, std::string>> rows{
      {"n", std::to_string(x.size())},
      {"slope", f(fit.slope)},
      {"intercept", f(fit.intercept)},
      {"r2", f(fit.r2)},
      {"rmse", f(fit.rmse)},
      {"spearman", f(fit.spearman)},
      {"cv_evaluations", std::to_string(cv.evaluations)},
      {"cv_r2_skipped", std::to_string(cv.r2_skipped)},
      {"cv_test_r2_mean", f(cv.test_r2_mean)},
      {"cv_test_r2_std", f(cv.test_r2_std)},
      {"cv_test_rmse_mean", f(cv.test_rmse_mean)},
      {"cv_test_rmse_std", f(cv.test_rmse_std)},
      {"cv_train_r2_mean", f(cv.train_r2_mean)},
      {"cv_train_r2_std", f(cv.train_r2_std)},
      {"cv_train_rmse_mean", f(cv.train_rmse_mean)},
      {"cv_train_rmse_std", f(cv.train_rmse_std)},
  };
  for (const auto& [k, v] : rows) out += k + "," + v + "\n";
  text::write_file_atomic(out_path(g, "regression.csv"), out);

  std::cout << "r2=" << f(fit.r2) << " rmse=" << f(fit.rmse) << " spearman=" << f(fit.spearman)
            << " slope=" << f(fit.slope) << " intercept=" << f(fit.intercept) << "\n"
            << "cv test r2=" << f(cv.test_r2_mean) << "+-" << f(cv.test_r2_std) << " rmse=" << f(cv.test_rmse_mean)
            << "+-" << f(cv.test_rmse_std) << " (" << cv.evaluations << " held-out sets)\n";
  return 0;
}

// ---- baseline --------------------------------------------------------------

struct BaselineArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string checkpoint;
  std::int64_t n = 10000;
  std::size_t bins = 20;
};

int cmd_baseline(const Globals& g, const BaselineArgs& a) {
  if (a.n < 1) throw ValidationError("--n must be positive");
  if (a.bins < 1) throw ValidationError("--bins must be positive");
  RunConfig cfg = load_config(a.config, a.overrides, g);
  const AssemblyEnv env = cfg.build_environment();
  const auto reward_fn = cfg.build_reward();
  std::string hash;
  const FlowModel model = load_model(a.checkpoint, env, &hash);
  const std::uint64_t seed = g.seed.value_or(0);
  prepare_out(g);
  write_manifest(g, "baseline", {{"config_file", a.config}, {"config", cfg.to_json()}, {"checkpoint", a.checkpoint},
                                 {"checkpoint_fnv1a64", hash}, {"seed", seed}, {"n_samples", a.n}, {"bins", a.bins}});
  const auto s = analysis::baseline_comparison(model, env, *reward_fn, a.n, seed, cfg.workers, a.bins);
  text::write_file_atomic(out_path(g, "baseline.csv"), analysis::baseline_csv(s));
  text::write_file_atomic(out_path(g, "baseline_histogram.csv"), analysis::baseline_histogram_csv(s));
  std::cout << "gflownet mean reward " << text::format_double(s.trained.mean_reward) << ", random "
            << text::format_double(s.random.mean_reward) << ", Welch t " << text::format_double(s.welch_t)
            << ", p " << text::format_double(s.p_value) << "\n";
  return 0;
}

// ---- flows -----------------------------------------------------------------

struct FlowsArgs {
  std::string config;
  std::vector<std::string> overrides;
  double bound = 1e6;
};

int cmd_flows(const Globals& g, const FlowsArgs& a) {
  RunConfig cfg = load_config(a.config, a.overrides, g);
  const AssemblyEnv env = cfg.build_environment();
  const auto reward_fn = cfg.build_reward();
  prepare_out(g);
  write_manifest(g, "flows", {{"config_file", a.config}, {"config", cfg.to_json()}, {"bound", a.bound}});
  const analysis::ExactFlows flows(env, *reward_fn, a.bound);

  std::string out = "depth,prefix,flow\n";
  for (const auto& [prefix, flow] : flows.flows()) {
    std::string ids;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
      if (i) ids += ' ';
      ids += env.vocabulary()[static_cast<std::size_t>(prefix[i])].id;
    }
    out += csv::row({std::to_string(prefix.size()), ids, text::format_double(flow)}) + '\n';
  }
  text::write_file_atomic(out_path(g, "flows.csv"), out);

  const double z = std::exp(flows.log_z());
  out = "assembly_record,reward,probability\n";
  for (std::size_t i = 0; i < flows.terminals().size(); ++i) {
    const double r = flows.terminal_rewards()[i];
    out += csv::row({env.to_record(flows.terminals()[i]), text::format_double(r),
                     text::format_double(loss_reward(reward_fn->spec(), r) / z)}) +
           '\n';
  }
  text::write_file_atomic(out_path(g, "terminals.csv"), out);
  std::cout << flows.terminals().size() << " terminals, logZ " << text::format_double(flows.log_z()) << "\n";
  return 0;
}

// ---- capture ---------------------------------------------------------------

struct CaptureArgs {
  std::string isotherms;
  std::string reference;
  std::string reference_column = "working_capacity";
};

int cmd_capture(const Globals& g, const CaptureArgs& a) {
  const auto rows = analysis::load_isotherms(a.isotherms);
  std::vector<double> reference;
  if (!a.reference.empty()) {
    const auto t = csv::load(a.reference);
    reference = numeric_column(t, t.require_column(a.reference_column, a.reference), a.reference);
    if (reference.empty()) throw ValidationError(a.reference + ": no reference rows");
  }
  prepare_out(g);
  write_manifest(g, "capture", {{"isotherms", a.isotherms}, {"reference", a.reference},
                                {"reference_column", a.reference_column}});
  std::string out = "material,working_capacity,suspect,selectivity";
  if (!reference.empty()) out += ",working_capacity_percentile";
  out += '\n';
  for (const auto& row : rows) {
    const auto wc = analysis::working_capacity(row);
    const auto sel = analysis::selectivity(row);
    if (wc.suspect) std::cerr << "warning: " << row.material << ": negative working capacity\n";
    std::vector<std::string> fields{row.material, text::format_double(wc.value), wc.suspect ? "true" : "false",
                                    sel ? text::format_double(*sel) : "undefined"};
    if (!reference.empty()) fields.push_back(text::format_double(analysis::percentile_rank(wc.value, reference)));
    out += csv::row(fields) + '\n';
  }
  text::write_file_atomic(out_path(g, "capture.csv"), out);
  std::cout << rows.size() << " materials\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward-proportional generation of building-block assemblies, plus analysis tools."};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed (overrides the config file)");
  app.add_option("--workers", g.workers, "Cap on worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory")->capture_default_str();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a flow model with trajectory balance");
  t->add_option("--config", train.config, "Run configuration file")->required();
  t->add_option("--set", train.overrides, "Override a config key (key=value)");
  t->add_option("--resume", train.resume, "Continue from a training checkpoint");
  t->add_option("--halt-after", train.halt_after, "Stop after this many episodes (rounded up to a batch)");

  SampleArgs sample;
  auto* s = app.add_subcommand("sample", "Sample a candidate dataset from a trained model");
  s->add_option("--config", sample.config)->required();
  s->add_option("--set", sample.overrides);
  s->add_option("--checkpoint", sample.checkpoint)->required();
  s->add_option("--n", sample.n, "Number of trajectories")->capture_default_str();
  s->add_option("--top-k", sample.top_k, "Also write the k best candidates");
  s->add_option("--epsilon", sample.epsilon, "Uniform exploration mix")->check(CLI::Range(0.0, 1.0));

  AmdArgs amd;
  auto* m = app.add_subcommand("amd", "AMD descriptors for a directory of P1 CIF files");
  m->add_option("--cif-dir", amd.cif_dir)->required();
  m->add_option("--reference-dir", amd.reference_dir, "Reference CIFs for novelty scores");
  m->add_option("--k", amd.k)->capture_default_str();

  RegressArgs regress;
  auto* r = app.add_subcommand("regress", "Univariate regression with repeated cross-validation");
  r->add_option("--csv", regress.csv)->required();
  r->add_option("--x", regress.x_column)->capture_default_str();
  r->add_option("--y", regress.y_column)->capture_default_str();
  r->add_option("--folds", regress.folds)->capture_default_str();
  r->add_option("--rounds", regress.rounds)->capture_default_str();
  r->add_option("--mode", regress.mode, "kfold or holdout")->capture_default_str();
  r->add_option("--holdout", regress.holdout, "Held-out fraction in holdout mode")->capture_default_str();

  BaselineArgs baseline;
  auto* b = app.add_subcommand("baseline", "Compare a trained model with uniform-random sampling");
  b->add_option("--config", baseline.config)->required();
  b->add_option("--set", baseline.overrides);
  b->add_option("--checkpoint", baseline.checkpoint)->required();
  b->add_option("--n", baseline.n)->capture_default_str();
  b->add_option("--bins", baseline.bins)->capture_default_str();

  FlowsArgs flows;
  auto* f = app.add_subcommand("flows", "Dump exact state flows of an enumerable environment");
  f->add_option("--config", flows.config)->required();
  f->add_option("--set", flows.overrides);
  f->add_option("--bound", flows.bound, "Maximum number of terminals to enumerate")->capture_default_str();

  CaptureArgs capture;
  auto* c = app.add_subcommand("capture", "Working capacity and selectivity from isotherm tables");
  c->add_option("--isotherms", capture.isotherms)->required();
  c->add_option("--reference", capture.reference, "CSV of reference working capacities for percentiles");
  c->add_option("--reference-column", capture.reference_column)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*t) return cmd_train(g, train);
    if (*s) return cmd_sample(g, sample);
    if (*m) return cmd_amd(g, amd);
    if (*r) return cmd_regress(g, regress);
    if (*b) return cmd_baseline(g, baseline);
    if (*f) return cmd_flows(g, flows);
    if (*c) return cmd_capture(g, capture);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DegenerateInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const EnumerationLimitError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const TrainingAbort& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
