#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace metarefl::cli {

// Process exit codes; stable across releases.
enum class CliExit : int {
  Success = 0,
  Usage = 2,
  Physics = 3,
  Solver = 4,
  Io = 5,
};

// Entry point shared by main() and the in-process tests. args excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace metarefl::cli
