#pragma once

#include <stdexcept>
#include <string>

namespace stageskip {

// Bad input from the user: malformed files, inconsistent flags, out-of-range
// arguments. The CLI maps these to exit code 1; anything else is exit 2.
struct UserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace stageskip
