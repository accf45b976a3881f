#include <string>
#include <vector>

#include "stageskip/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return stageskip::cli::dispatch(args);
}
