#include "reticgen/config.hpp"

#include <cmath>
#include <filesystem>

#include "reticgen/error.hpp"
#include "reticgen/text.hpp"

namespace reticgen {

namespace fs = std::filesystem;

namespace {

double need_double(std::string_view v, const std::string& where, const std::string& key) {
  const auto d = text::parse_double(v);
  if (!d) throw ValidationError(where + ": '" + key + "' expects a number, got '" + std::string(v) + "'");
  return *d;
}

long long need_int(std::string_view v, const std::string& where, const std::string& key) {
  const auto i = text::parse_int(v);
  if (!i) throw ValidationError(where + ": '" + key + "' expects an integer, got '" + std::string(v) + "'");
  return *i;
}

std::size_t need_count(std::string_view v, const std::string& where, const std::string& key) {
  const long long i = need_int(v, where, key);
  if (i < 0) throw ValidationError(where + ": '" + key + "' must be non-negative");
  return static_cast<std::size_t>(i);
}

bool need_bool(std::string_view v, const std::string& where, const std::string& key) {
  const auto b = text::parse_bool(v);
  if (!b) throw ValidationError(where + ": '" + key + "' expects true or false, got '" + std::string(v) + "'");
  return *b;
}

}  // namespace

void RunConfig::set(const std::string& key, std::string_view raw, const std::string& where) {
  const std::string_view v = text::trim(raw);
  auto path = [&] {
    fs::path p{std::string(v)};
    if (p.is_relative() && !base_dir_.empty()) p = fs::path(base_dir_) / p;
    return p.lexically_normal().string();
  };
  if (key == "vocabulary") {
    vocabulary_path = path();
  } else if (key == "topology") {
    topology_path = path();
  } else if (key == "edges") {
    edges = need_bool(v, where, key);
  } else if (key == "cutoff") {
    reward.cutoff = need_double(v, where, key);
  } else if (key == "evaluator") {
    if (v == "surrogate") {
      reward.evaluator = EvaluatorKind::surrogate;
    } else if (v == "external") {
      reward.evaluator = EvaluatorKind::external;
    } else {
      throw ValidationError(where + ": 'evaluator' must be surrogate or external");
    }
  } else if (key == "surrogate_scale") {
    reward.surrogate_scale = need_double(v, where, key);
  } else if (key == "reward_floor") {
    reward.reward_floor = need_double(v, where, key);
  } else if (key == "memoize") {
    memoize = need_bool(v, where, key);
  } else if (key == "external_command") {
    external.command = std::string(v);
  } else if (key == "external_args") {
    external.arguments.clear();
    for (auto a : text::split_whitespace(v)) external.arguments.emplace_back(a);
  } else if (key == "external_timeout_ms") {
    external.timeout = std::chrono::milliseconds(need_count(v, where, key));
  } else if (key == "external_workers") {
    external.workers = need_count(v, where, key);
  } else if (key == "learning_rate_model") {
    train.learning_rate_model = need_double(v, where, key);
  } else if (key == "learning_rate_log_z") {
    train.learning_rate_log_z = need_double(v, where, key);
  } else if (key == "max_episodes") {
    train.max_episodes = need_int(v, where, key);
  } else if (key == "stop_window") {
    train.stop_window = need_int(v, where, key);
  } else if (key == "stop_threshold") {
    train.stop_threshold = need_double(v, where, key);
  } else if (key == "batch_size") {
    train.batch_size = need_int(v, where, key);
  } else if (key == "exploration_epsilon") {
    train.exploration_epsilon = need_double(v, where, key);
  } else if (key == "seed") {
    const long long s = need_int(v, where, key);
    if (s < 0) throw ValidationError(where + ": 'seed' must be non-negative");
    train.seed = static_cast<std::uint64_t>(s);
  } else if (key == "smoothing_window") {
    train.smoothing_window = need_int(v, where, key);
  } else if (key == "checkpoint_every") {
    train.checkpoint_every = need_int(v, where, key);
  } else if (key == "adam_beta1") {
    train.adam_beta1 = need_double(v, where, key);
  } else if (key == "adam_beta2") {
    train.adam_beta2 = need_double(v, where, key);
  } else if (key == "adam_epsilon") {
    train.adam_epsilon = need_double(v, where, key);
  } else if (key == "embed_dim") {
    embed_dim = need_count(v, where, key);
  } else if (key == "hidden_dim") {
    hidden_dim = need_count(v, where, key);
  } else if (key == "workers") {
    workers = need_count(v, where, key);
  } else {
    throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

RunConfig RunConfig::parse(std::string_view body, const std::string& source, const std::string& base_dir) {
  RunConfig cfg;
  cfg.base_dir_ = base_dir;
  std::map<std::string, std::size_t> seen;
  const auto all = text::lines(body);
  for (std::size_t n = 0; n < all.size(); ++n) {
    std::string_view line = all[n];
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(n + 1);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ValidationError(where + ": expected 'key = value'");
    const std::string key(text::trim(line.substr(0, eq)));
    if (auto [it, fresh] = seen.emplace(key, n + 1); !fresh) {
      throw ValidationError(where + ": '" + key + "' already set on line " + std::to_string(it->second));
    }
    cfg.set(key, line.substr(eq + 1), where);
  }
  if (cfg.vocabulary_path.empty()) throw ValidationError(source + ": missing required key 'vocabulary'");
  if (cfg.topology_path.empty()) throw ValidationError(source + ": missing required key 'topology'");
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  const fs::path p(path);
  return parse(text::read_file(path), path, p.parent_path().string());
}

void RunConfig::validate() const {
  reward.validate();
  train.validate();
  if (embed_dim == 0 || hidden_dim == 0) throw ValidationError("config: embed_dim and hidden_dim must be positive");
  if (workers == 0) throw ValidationError("config: workers must be at least 1");
  if (reward.evaluator == EvaluatorKind::external && external.command.empty()) {
    throw ValidationError("config: evaluator = external needs external_command");
  }
  for (const auto* p : {&vocabulary_path, &topology_path}) {
    if (!fs::exists(*p)) throw ValidationError("config: file not found: " + *p);
  }
}

AssemblyEnv RunConfig::build_environment() const {
  Vocabulary vocab = Vocabulary::load(vocabulary_path);
  Topology topo = Topology::load(topology_path, vocab);
  if (edges) topo.edges_enabled = *edges;
  return AssemblyEnv(std::move(vocab), std::move(topo));
}

std::unique_ptr<RewardFunction> RunConfig::build_reward() const {
  std::shared_ptr<const GsaEvaluator> eval;
  std::size_t pool = 1;
  if (reward.evaluator == EvaluatorKind::surrogate) {
    eval = std::make_shared<SurrogateEvaluator>(reward.surrogate_scale);
  } else {
    eval = std::make_shared<ExternalEvaluator>(external);
    pool = std::max<std::size_t>(1, std::min(external.workers, workers > 1 ? workers : external.workers));
  }
  return std::make_unique<RewardFunction>(reward, std::move(eval), memoize, pool);
}

FlowModelConfig RunConfig::model_config(std::size_t vocab_size) const {
  return FlowModelConfig{vocab_size, embed_dim, hidden_dim};
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["vocabulary"] = vocabulary_path;
  j["topology"] = topology_path;
  j["edges"] = edges ? nlohmann::json(*edges) : nlohmann::json(nullptr);
  j["reward"] = {{"cutoff", reward.cutoff},
                 {"evaluator", reward.evaluator == EvaluatorKind::surrogate ? "surrogate" : "external"},
                 {"surrogate_scale", reward.surrogate_scale},
                 {"reward_floor", reward.reward_floor},
                 {"memoize", memoize}};
  j["external"] = {{"command", external.command},
                   {"arguments", external.arguments},
                   {"timeout_ms", external.timeout.count()},
                   {"workers", external.workers}};
  j["train"] = train.to_json();
  j["model"] = {{"embed_dim", embed_dim}, {"hidden_dim", hidden_dim}};
  j["workers"] = workers;
  return j;
}

}  // namespace reticgen
