#pragma once

namespace mts {

// Single entry point behind the mtsunet binary; exposed for in-process CLI
// tests. Exit codes: 0 success, 2 usage/config error, 3 data error,
// 4 internal error.
int run_cli(int argc, const char* const* argv);

}  // namespace mts
