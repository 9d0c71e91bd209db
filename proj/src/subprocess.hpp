#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace reticgen::detail {

struct ProcessResult {
  bool launched = false;
  bool timed_out = false;
  int exit_code = -1;  // -1 when killed by a signal
  std::string output;
  std::string error;
};

// Runs `command` via /bin/sh -c in its own process group, writes `input` to
// its stdin, and collects stdout until exit or timeout. On timeout the whole
// process group is killed.
ProcessResult run_process(const std::string& command, std::string_view input, std::chrono::milliseconds timeout);

}  // namespace reticgen::detail
