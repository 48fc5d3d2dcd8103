#pragma once

namespace cascade::cli {

/// Full command-line entry point. Returns the process exit code:
/// 0 success, 1 validation/data errors, 2 usage errors.
int run(int argc, const char* const* argv);

} // namespace cascade::cli
