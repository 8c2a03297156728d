#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "vpdiag/error.hpp"

namespace vpdiag::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitData = 3,
  kExitUnmetDependency = 4,
  kExitInternal = 5,
};

int exit_code_for(ErrorCode code);

/// Parses `args` (program name excluded), runs the subcommand and returns the
/// exit status. Every successful run writes a resolved-config JSON that
/// `vpdiag replay <file>` accepts.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vpdiag::cli
