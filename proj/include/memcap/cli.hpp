#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace memcap {

// Runs one harness command. args excludes the program name.
// Exit codes: 0 all checks passed, 1 a check or construction failed, 2 usage error.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_command(int argc, const char* const* argv);

}  // namespace memcap
