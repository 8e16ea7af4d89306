#pragma once

#include <ostream>

namespace mtsk {

/// Entry point of the `mtsk` tool. Normal output goes to `out`; on failure
/// a single JSON line {"error": kind, "message": ...} goes to `err` and the
/// return value is nonzero (2 usage/config, 3 data/io, 4 training, 5 other).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mtsk
