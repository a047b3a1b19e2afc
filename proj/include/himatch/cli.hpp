#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace himatch {

// Exit codes contract: 0 success, 1 usage/config error, 2 data error
// (missing or malformed inputs, module failures).
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Full command-line driver; args excludes the program name. Streams take
// normal output and diagnostics so tests can capture both.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace himatch
