#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace flexlog {

/// Exit codes besides 0 and CLI11's parse codes.
inline constexpr int kExitError = 1;
inline constexpr int kExitNoScenes = 2;
inline constexpr int kExitNoRegions = 3;

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace flexlog
