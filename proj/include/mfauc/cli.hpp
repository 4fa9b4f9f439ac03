#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mfauc {

inline constexpr const char* kVersion = "1.0.0";

/// Runs one subcommand. `args` excludes the program name. Returns 0 on
/// success, 1 on invalid input or usage, 2 on runtime failure.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Default worker count: MFAUC_WORKERS when set to a positive integer, else 1.
long default_workers();

}  // namespace mfauc
