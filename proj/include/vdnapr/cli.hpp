#pragma once

#include <ostream>

namespace vdnapr::cli {

inline constexpr const char* kVersion = "1.0.0";

/// Runs one `vdnapr` command line. Returns 0 on success, 1 on a domain error
/// (printed as "error: Kind: message"), 2 on a usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vdnapr::cli
