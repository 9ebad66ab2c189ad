#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sscd::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kDataError = 3,
  kRuntimeError = 4,
};

/// Runs one `sscd` invocation. `args` excludes the program name. Normal output
/// goes to `out`, diagnostics to `err`; the return value is the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sscd::cli
