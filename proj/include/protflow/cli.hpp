#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "protflow/error.hpp"

namespace protflow {

/// Process exit code for an error: 1 config, 2 data, 3 diverged,
/// 4 incompatible or incomplete checkpoint.
int exit_code_for(const Error& e);

/// Runs one subcommand; `args` excludes the program name. Returns the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace protflow
