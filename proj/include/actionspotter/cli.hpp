// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace actionspotter::cli {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1; // bad arguments, config or checkpoint
inline constexpr int kExitData = 2;  // input data failed to load or validate

/// Runs the `actionspotter` command line. `args[0]` is the program name.
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace actionspotter::cli
