#pragma once

#include <ostream>

namespace s2cast::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kDataError = 3,
  kNumericalError = 4,
};

/// Runs one `s2cast` subcommand. Diagnostics go to `err`, results to files or `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace s2cast::cli
