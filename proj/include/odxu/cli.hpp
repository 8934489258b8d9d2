#pragma once

namespace odxu {

// Exit codes: 0 success, 1 usage error, 2 data/model error.
int run_cli(int argc, const char* const* argv);

} // namespace odxu
