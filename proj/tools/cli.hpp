#pragma once

#include <iosfwd>

namespace daeobs::cli {

/// Parses the command line and runs one of `sim`, `obs`, `sekf`. Data goes to
/// the files named by --out (or `out` when absent), diagnostics to `err`.
/// Returns 0 on success, 1 for usage and parse errors, 2 for numerical failures.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace daeobs::cli
