#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace flk::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,  // gradcheck found a failing check
  kUsage = 2,
  kIoFailure = 3,
  kParseFailure = 4,  // config files, checkpoints, image headers
  kShapeFailure = 5,
  kNumericFailure = 6,
  kInternalFailure = 70,
};

/// Runs one subcommand. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flk::cli
