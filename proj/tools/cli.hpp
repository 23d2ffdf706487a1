#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cpsim::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kConfigError = 2,
  kSimulationError = 3,
};

/// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "CPSIM_OUT_DIR";

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace cpsim::cli
