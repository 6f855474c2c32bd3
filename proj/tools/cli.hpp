#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace emosphere::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

/// Parses `args` (without the program name) and runs the chosen subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace emosphere::cli
