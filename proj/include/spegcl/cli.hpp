#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spegcl {

inline constexpr const char* kToolVersion = "0.1.0";

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitData = 2,
  kExitNumeric = 3,
  kExitTheory = 4,
};

/// Entry point of the `spegcl` tool. `args` excludes the program name.
/// Results go to files under the output directory; `out` gets a short
/// summary and `err` a one-line `spegcl: error: <class>: <reason>` on
/// failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spegcl
