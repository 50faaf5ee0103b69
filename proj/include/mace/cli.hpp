#pragma once

namespace mace::cli {

// one exit code per error class so scripts can branch on failures
inline constexpr int kExitOk = 0;
inline constexpr int kExitUnexpected = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitData = 4;
inline constexpr int kExitFit = 5;
inline constexpr int kExitArtifact = 6;

// full command-line entry point: parses subcommands and flags, executes,
// and maps library exceptions onto the exit codes above
int run(int argc, const char* const* argv);

}  // namespace mace::cli
