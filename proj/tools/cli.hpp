#pragma once

#include <iosfwd>

namespace dewm::cli {

// Parses argv, runs the subcommand and returns the process exit status.
// Diagnostics go to `err`; results go to `out` unless an --out path is given.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dewm::cli
