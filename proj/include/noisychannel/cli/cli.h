#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace nc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Runs one subcommand. `args` excludes the program name. Errors go to `err`
// as a single line starting with "error:".
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Expands `--config FILE` (key=value lines, `#` comments) into flags placed
// before the remaining arguments, so explicit flags override file values.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

}  // namespace nc::cli
