#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reticgen/environment.hpp"
#include "reticgen/policy.hpp"
#include "reticgen/reward.hpp"

namespace reticgen {

struct CandidateRecord {
  std::string assembly_record;
  std::vector<int> sequence;
  GsaResult gsa;
  double reward = 0.0;
  std::int64_t sample_count = 0;
  std::int64_t first_seen = 0;  // 0-based index of the first draw
};

struct GenerateOptions {
  std::size_t workers = 1;
  std::size_t chunk_size = 4096;  // draws per RNG stream
  double exploration_epsilon = 0.0;
};

// Draws n trajectories and merges duplicates. Draw i belongs to chunk
// i / chunk_size, and each chunk has its own RNG stream derived from `seed`,
// so the output does not depend on the worker count. Records come back sorted
// by assembly record. Evaluation failures are kept on the record.
std::vector<CandidateRecord> generate(const Policy& policy, const AssemblyEnv& env, const RewardFunction& reward_fn,
                                      std::int64_t n, std::uint64_t seed, const GenerateOptions& options = {});

// Reward descending, ties by assembly record ascending. k larger than the
// input returns everything; `truncated_request` is set in that case.
std::vector<CandidateRecord> top_k(std::vector<CandidateRecord> records, std::size_t k,
                                   bool* truncated_request = nullptr);

std::string dataset_csv_header();
std::string dataset_csv(const std::vector<CandidateRecord>& records);

}  // namespace reticgen
