#pragma once

// Command-line front end: train, stylize, reconstruct, gradcheck and
// eval-separation.

#include <iosfwd>
#include <string>
#include <vector>

namespace peerstyle::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kConfig = 2, kRuntime = 3 };

/// Parses `args` (without the program name) and runs the command.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Version string recorded in run manifests.
std::string code_version();

}  // namespace peerstyle::cli
