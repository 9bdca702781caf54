// cli.hpp - command-line entry point
//
// Subcommands: index build, route, verify-bound, bench, train-toy, flops.
// Exit codes: 0 success, 1 usage, 2 config/constraint, 3 data/corruption,
// 4 numeric divergence.

#pragma once

#include <string>
#include <vector>

namespace airmoe {

// argv without the program name. Output goes to stdout or --out <path>.
int run_command(const std::vector<std::string>& args);

}  // namespace airmoe
