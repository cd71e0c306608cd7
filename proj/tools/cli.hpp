#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace fkp::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kNumeric = 3,
  kFormat = 4,
};

using Setting = std::pair<std::string, std::string>;

/// Settings file: one key=value per line, '#' starts a comment, blank lines
/// are skipped. Keys and values are trimmed. Throws ConfigError on a line
/// without '=' or with an empty key.
std::vector<Setting> parse_config(std::istream& in, const std::string& source);

/// Runs `fkp <args...>` and returns the process exit code. Normal output goes
/// to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fkp::cli
