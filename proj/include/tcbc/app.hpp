#pragma once

// Command-line front end: generate, train, ablate, plotdata, verify.

#include <string>
#include <vector>

namespace tcbc::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitVerifyMismatch = 1,
    kExitUsage = 2,
    kExitNumerical = 3,
};

/// argv[0] is the program name.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

} // namespace tcbc::cli
