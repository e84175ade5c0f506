#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace usf::cli {

// Dispatches a full command line (argv[0] excluded). Returns the process exit
// code: 0 success, 1 usage/validation problem, 2 runtime failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace usf::cli
