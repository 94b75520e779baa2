#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace klite {

// args excludes the program name. Returns 0 on success, 1 on usage errors, 2 on data
// errors. The one-line JSON summary goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace klite
