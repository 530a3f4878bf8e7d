#pragma once

#include <string>
#include <vector>

namespace lenscam {

// Parses the argument vector (without argv[0]) and runs one subcommand:
// mask | capture | deconv | train | eval | cost. Every run writes a
// run.json into the output directory capturing the fully resolved config;
// feeding that file back through --config reproduces the numeric outputs
// byte for byte.
//
// Exit codes: 0 success, 1 user/config error, 2 internal fault.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

}  // namespace lenscam
