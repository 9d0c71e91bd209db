#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "reticgen/environment.hpp"
#include "reticgen/reward.hpp"

namespace testing {

inline std::string fixture(const std::string& name) { return std::string(FIXTURE_DIR) + "/" + name; }

inline reticgen::AssemblyEnv load_env(const std::string& topology) {
  auto vocab = reticgen::Vocabulary::load(fixture("vocabulary.txt"));
  auto topo = reticgen::Topology::load(fixture(topology), vocab);
  return reticgen::AssemblyEnv(std::move(vocab), std::move(topo));
}

inline reticgen::AssemblyEnv tiny_env() { return load_env("tiny12.topo"); }

inline std::vector<int> tokens(const reticgen::AssemblyEnv& env, const std::vector<std::string>& ids) {
  std::vector<int> out;
  for (const auto& id : ids) out.push_back(env.vocabulary().index_of(id));
  return out;
}

// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("reticgen_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Rewards of the twelve-terminal fixture (C = 5000, surrogate scale
// 6022.14076), recomputed outside the library. Odometer order over
// {N1,N2,N3} x {N4,N5} x {E1,E2}.
struct TinyRow {
  const char* record;
  double gsa;
  double reward;
};

inline const std::vector<TinyRow>& tiny_table() {
  static const std::vector<TinyRow> rows = {
      {"tiny:N1,N4,E1", 5526.199756235294, 1.11097715872981},
      {"tiny:N1,N4,E2", 6315.903723902439, 1.3010618578409172},
      {"tiny:N1,N5,E1", 6699.6315955, 1.404844076574217},
      {"tiny:N1,N5,E2", 7586.333165194806, 1.67743632863489},
      {"tiny:N2,N4,E1", 6925.4618740000005, 1.4697500830405434},
      {"tiny:N2,N4,E2", 7820.962025974026, 1.7580274354422167},
      {"tiny:N2,N5,E1", 8270.406643733333, 1.9233747564069978},
      {"tiny:N2,N5,E2", 9284.133671666668, 2.3556736424955607},
      {"tiny:N3,N4,E1", 9191.688528421053, 2.312519691668302},
      {"tiny:N3,N4,E2", 10015.081916086956, 2.7264935868253404},
      {"tiny:N3,N5,E1", 10438.377317333334, 2.9673682932989394},
      {"tiny:N3,N5,E2", 11352.081432643678, 3.5623352058888966},
  };
  return rows;
}

inline constexpr double kTinyZ = 24.569862116846632;
inline constexpr double kTinyLogZ = 3.2015205746673874;
inline constexpr double kTinyMeanReward = 2.0474885097372195;            // E[R] under uniform
inline constexpr double kTinyProportionalMean = 2.299191883822818;       // E[R^2] / E[R]

}  // namespace testing
