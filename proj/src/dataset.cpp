#include "reticgen/dataset.hpp"

#include <algorithm>
#include <map>
#include <thread>

#include "reticgen/csv.hpp"
#include "reticgen/error.hpp"
#include "reticgen/rng.hpp"
#include "reticgen/sampler.hpp"
#include "reticgen/text.hpp"

namespace reticgen {

namespace {

struct Tally {
  std::int64_t count = 0;
  std::int64_t first_seen = 0;
};

using TallyMap = std::map<std::vector<int>, Tally>;

void merge_into(TallyMap& into, const TallyMap& from) {
  for (const auto& [seq, t] : from) {
    auto [it, inserted] = into.try_emplace(seq, t);
    if (!inserted) {
      it->second.count += t.count;
      it->second.first_seen = std::min(it->second.first_seen, t.first_seen);
    }
  }
}

}  // namespace

std::vector<CandidateRecord> generate(const Policy& policy, const AssemblyEnv& env, const RewardFunction& reward_fn,
                                      std::int64_t n, std::uint64_t seed, const GenerateOptions& options) {
  if (n < 0) throw ContractError("generate: negative sample count");
  if (options.chunk_size == 0) throw ContractError("generate: chunk_size must be positive");
  const auto chunk = static_cast<std::int64_t>(options.chunk_size);
  const std::int64_t chunks = (n + chunk - 1) / chunk;
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(options.workers, static_cast<std::size_t>(chunks)));

  std::vector<TallyMap> partial(workers);
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      for (std::int64_t c = static_cast<std::int64_t>(w); c < chunks; c += static_cast<std::int64_t>(workers)) {
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(c));
        const std::int64_t end = std::min(n, (c + 1) * chunk);
        for (std::int64_t i = c * chunk; i < end; ++i) {
          auto traj = sample_actions(policy, env, options.exploration_epsilon, rng);
          auto [it, inserted] = partial[w].try_emplace(std::move(traj.actions), Tally{0, i});
          ++it->second.count;
          it->second.first_seen = std::min(it->second.first_seen, i);
        }
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  TallyMap merged;
  for (const auto& p : partial) merge_into(merged, p);

  std::vector<std::vector<int>> sequences;
  sequences.reserve(merged.size());
  for (const auto& [seq, t] : merged) sequences.push_back(seq);
  const auto evaluations = reward_fn.evaluate_batch(env, sequences);

  std::vector<CandidateRecord> out;
  out.reserve(merged.size());
  std::size_t i = 0;
  for (const auto& [seq, t] : merged) {
    CandidateRecord r;
    r.assembly_record = env.to_record(seq);
    r.sequence = seq;
    r.gsa = evaluations[i].gsa;
    r.reward = evaluations[i].reward;
    r.sample_count = t.count;
    r.first_seen = t.first_seen;
    out.push_back(std::move(r));
    ++i;
  }
  std::sort(out.begin(), out.end(),
            [](const CandidateRecord& a, const CandidateRecord& b) { return a.assembly_record < b.assembly_record; });
  return out;
}

std::vector<CandidateRecord> top_k(std::vector<CandidateRecord> records, std::size_t k, bool* truncated_request) {
  if (k == 0) throw ContractError("top_k: k must be at least 1");
  if (truncated_request) *truncated_request = k > records.size();
  std::sort(records.begin(), records.end(), [](const CandidateRecord& a, const CandidateRecord& b) {
    if (a.reward != b.reward) return a.reward > b.reward;
    return a.assembly_record < b.assembly_record;
  });
  if (records.size() > k) records.resize(k);
  return records;
}

std::string dataset_csv_header() { return "assembly_record,gsa_m2_per_g,reward,sample_count,first_seen_episode"; }

std::string dataset_csv(const std::vector<CandidateRecord>& records) {
  std::string out = dataset_csv_header() + "\n";
  for (const auto& r : records) {
    out += csv::field(r.assembly_record);
    out += ',';
    out += r.gsa.value ? text::format_double(*r.gsa.value) : std::string("error");
    out += ',' + text::format_double(r.reward);
    out += ',' + std::to_string(r.sample_count);
    out += ',' + std::to_string(r.first_seen);
    out += '\n';
  }
  return out;
}

}  // namespace reticgen
