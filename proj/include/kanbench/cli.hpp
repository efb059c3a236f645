#pragma once

#include <ostream>

namespace kanbench {

/// Entry point behind the `kanbench` binary; returns the process exit code.
/// Exit codes: 0 success, 2 config error, 3 missing/failed dependency,
/// 4 shape error, 5 numerical divergence, 1 anything else.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace kanbench
