#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace crashscene::cli {

// Runs the crashscene command line (args[0] is the program name). Verbs:
// extract, synth, eval, serve. Returns the process exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace crashscene::cli
