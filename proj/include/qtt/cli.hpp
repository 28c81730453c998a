#pragma once

#include <ostream>
#include <span>
#include <string>

namespace qtt {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUser = 2;

std::string tool_version();

/// Runs the `qttc` front end. `args` excludes the program name.
/// Returns 0 on success, 1 on internal errors and 2 on user or input errors.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace qtt
