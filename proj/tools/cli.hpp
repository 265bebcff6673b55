#pragma once

namespace slt::cli {

// Dispatches one subcommand. Returns 0 on success, 1 on a validation
// problem (flags, config files, missing inputs), 2 on a runtime failure.
int run(int argc, const char* const* argv);

} // namespace slt::cli
