#pragma once

#include <iosfwd>

#include "lowlight/error.hpp"

namespace lowlight::cli {

// Process exit codes, one per error class.
enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitUsage = 2,
  kExitInvalidInput = 3,
  kExitIo = 4,
  kExitFormat = 5,
  kExitNumeric = 6,
  kExitNotFound = 7,
};

int exit_code_for(ErrorKind kind);

// Runs the `lowlight` command line. Summaries go to out, diagnostics and
// progress to err.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lowlight::cli
