#include <iostream>
#include <string>
#include <vector>

#include "himatch/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return himatch::run_cli(args, std::cout, std::cerr);
}
