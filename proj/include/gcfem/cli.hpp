#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gcfem {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitNonConvergence = 2, kExitIo = 3 };

/// Runs the `gcfem` command line. `args` excludes the program name.
/// Subcommands: mesh, solve, apriori, aposteriori.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_cli(int argc, char** argv);

}  // namespace gcfem
