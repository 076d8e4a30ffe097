#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace icafuse::cli {

// Exit codes: 0 success, 1 validation/usage error, 2 runtime or numeric error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace icafuse::cli
