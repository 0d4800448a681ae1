#pragma once

#include <ostream>

namespace transnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Parses argv (argv[0] is the program name) and runs one subcommand.
/// Regular output goes to `out`; usage errors and the single-line
/// `error: <kind>: <message>` report go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace transnet::cli
