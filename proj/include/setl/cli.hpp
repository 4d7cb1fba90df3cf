#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "setl/error.hpp"

namespace setl {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;

int exit_code(ErrorKind kind);

// Runs one command line (without the program name). Failures print
//   error: kind=<kind> code=<exit code> message="<text>"
// to `err` and return the matching nonzero code; usage errors also print the
// usage text.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace setl
