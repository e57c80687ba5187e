#pragma once

// The chartab command line: generate, train, evaluate, attribute, embed and
// permute subcommands. Exit codes: 0 success, 1 usage error, 2 data error,
// 3 numerical failure.

#include <iosfwd>

namespace chartab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace chartab::cli
