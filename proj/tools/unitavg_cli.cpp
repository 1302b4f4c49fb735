#include <iostream>
#include <string>
#include <vector>

#include "unitavg/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return unitavg::run_cli(args, std::cout, std::cerr);
}
