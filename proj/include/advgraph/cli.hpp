#pragma once

#include "advgraph/error.hpp"

#include <ostream>

namespace advgraph {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

int exit_code(ErrorKind kind) noexcept;

/// Entry point of the command-line tool; never throws.
int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace advgraph
