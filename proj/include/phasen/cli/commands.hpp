#pragma once

#include <ostream>

namespace phasen::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

/// Entry point of the `phasen` tool. Subcommands: train, enhance, eval,
/// count-params, grad-check, ablate. Results go to `out`, diagnostics to
/// `err`.
int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace phasen::cli
