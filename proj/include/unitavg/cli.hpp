#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace unitavg {

/// Command-line entry point: subcommands estimate, simulate, limit and psi.
/// Returns 0 on success, 2 on usage errors, 1 on computation errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace unitavg
