#pragma once

#include <string>
#include <vector>

namespace cnppo::cli {

// Parses and executes one command line (without the program name).
// Returns the process exit code: 0 success, 2 usage or configuration error,
// 1 runtime failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace cnppo::cli
