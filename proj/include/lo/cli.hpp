#pragma once

namespace lo {

// Full command dispatch. Returns the process exit status: 0 ok,
// 1 runtime error (diagnostic line on stderr), 2 usage error.
int run_cli(int argc, const char* const* argv);

}  // namespace lo
