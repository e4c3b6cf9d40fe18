#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace scapt {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kInternal = 1;
inline constexpr int kUsage = 2;
inline constexpr int kInput = 3;
inline constexpr int kIncompatible = 4;
inline constexpr int kOutputExists = 5;
inline constexpr int kNumeric = 6;
inline constexpr int kDegenerateData = 7;
inline constexpr int kGradcheckFailed = 9;
}  // namespace exit_code

/// Runs one `scapt` command. `args` excludes the program name. Results go
/// to `out`; logs and the JSON error object go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace scapt
