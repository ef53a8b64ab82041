#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lexmine {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes of `dispatch`.
enum ExitCode : int {
    exit_ok = 0,
    exit_internal = 1,
    exit_config = 2,  ///< bad flag, config key or value
    exit_data = 3,    ///< unreadable or malformed input
};

/// Runs one command. `args` excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lexmine
