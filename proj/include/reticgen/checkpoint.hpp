#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace reticgen {

// Versioned binary container:
//
//   "RGFNCKPT" | u32 version | u64 header bytes | JSON header
//   | f64 payload (little-endian, arrays in header order) | u64 FNV-1a of all prior bytes
//
// The header names every array and its length; `meta` carries everything
// that is not a flat float array (config echo, counters, RNG state, ...).
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, std::vector<double>>> arrays;

  const std::vector<double>& array(const std::string& name) const;  // throws ValidationError
  void put(std::string name, std::vector<double> values);
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::string& bytes);  // integrity failures -> ValidationError

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace reticgen
