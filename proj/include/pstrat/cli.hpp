#pragma once

#include <iosfwd>

namespace pstrat {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes: 0 success, 2 input/config error, 3 estimation failure,
// 4 internal invariant violation.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pstrat
