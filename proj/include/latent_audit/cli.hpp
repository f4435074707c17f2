#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace latent_audit {

/// Exit codes: 0 success, 1 I/O failure, 2 validation failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitValidation = 2;

/// Runs the command line `args` (without the program name). Normal output
/// goes to `out`, diagnostics and warnings to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace latent_audit
