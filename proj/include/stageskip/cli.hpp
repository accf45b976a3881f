#pragma once

#include <string>
#include <vector>

namespace stageskip::cli {

// Dispatches one invocation. argv excludes the program name. Exit codes:
// 0 success, 1 bad input or arguments, 2 internal error.
int dispatch(const std::vector<std::string>& argv);

}  // namespace stageskip::cli
