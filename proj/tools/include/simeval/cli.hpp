#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace simeval::cli {

// Exit-code contract: distinct codes per failure category.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitCompute = 4;
inline constexpr int kExitInternal = 5;

/// Runs one CLI invocation (args exclude the program name). Testable
/// in-process; the simeval binary is a thin wrapper around this.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace simeval::cli
