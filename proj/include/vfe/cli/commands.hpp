#pragma once

#include <string>
#include <vector>

namespace vfe::cli {

/// Exit codes of the vfe tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitAborted = 3;
inline constexpr int kExitIo = 4;

/// Runs one `vfe` invocation; `args` excludes the program name.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace vfe::cli
