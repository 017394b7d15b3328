#pragma once

#include <iosfwd>

namespace sbridge {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitEstimation = 3;

/// Entry point of the surrogate-bridge executable: estimate, simulate or
/// sensitivity. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sbridge
