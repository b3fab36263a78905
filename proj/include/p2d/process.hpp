#pragma once

#include <string>
#include <vector>

namespace p2d {

struct ProcessResult {
  int exit_status = -1;  // -1 when the program could not be started
  std::string stdout_text;
};

/// Runs argv[0] (PATH lookup) with the given arguments and captures stdout.
ProcessResult run_process(const std::vector<std::string>& argv);

}  // namespace p2d
