#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ssgan::cli {

// Runs one command line (without the program name). Returns the process
// exit code: 0 success, 1 invalid input or configuration, 2 numerical
// failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ssgan::cli
