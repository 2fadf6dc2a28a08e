#pragma once

#include <iosfwd>

namespace expadv::cli {

/// Entry point of the expadv tool. Returns 0 on success, 1 on usage errors
/// (bad flags, unknown keys, missing files) and 2 on runtime failures.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace expadv::cli
