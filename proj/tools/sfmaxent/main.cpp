#include <iostream>
#include <string>
#include <vector>

#include "sfmaxent/cli_runner.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sfmaxent::run_cli(args, std::cin, std::cout, std::cerr);
}
