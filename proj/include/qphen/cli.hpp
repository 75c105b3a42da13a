#pragma once

namespace qphen::cli {

// Full command-line entry point; maps errors to exit codes:
// 0 success, 2 usage, 3 data/schema, 4 solver non-convergence, 5 internal.
int run(int argc, const char* const* argv);

} // namespace qphen::cli
