#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace inklab::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kUsageError = 2;

/// Runs one CLI invocation. `args` excludes the program name. Normal output
/// goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace inklab::cli
