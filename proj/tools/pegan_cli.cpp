#include <iostream>
#include <string>
#include <vector>

#include "pegan/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return pegan::run_cli(args, std::cout, std::cerr);
}
