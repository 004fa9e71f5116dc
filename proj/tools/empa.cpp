#include <iostream>
#include <string>
#include <vector>

#include "empa/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return empa::dispatch(args, std::cout, std::cerr);
}
