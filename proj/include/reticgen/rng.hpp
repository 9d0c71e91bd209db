#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace reticgen {

// Seeded random stream with platform-independent draws. The standard
// distributions are implementation-defined, so every draw used by the
// library goes through the helpers below.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Independent stream number `stream` of the base seed.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64() { return engine_(); }
  double uniform();                      // [0, 1)
  std::uint64_t uniform_index(std::uint64_t n);  // [0, n)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();                       // standard normal, Box-Muller

  std::string serialize() const;
  static Rng deserialize(const std::string& state);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace reticgen
