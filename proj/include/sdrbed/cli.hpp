#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sdrbed {

/// Runs the operator CLI. `args` excludes the program name. Returns 0 on
/// success, 2 on a usage error and 1 on any other failure, after printing
/// "error: <ErrorName> ..." to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sdrbed
