#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace tmiqa::cli {

enum ExitCode : int {
  kOk = 0,
  kUsageError = 1,
  kDataError = 2,
  kInternalError = 3,
};

/// Runs one invocation. args[0] is the program name. Machine-readable output
/// goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tmiqa::cli
