#include <iostream>
#include <string>
#include <vector>

#include "stt/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return stt::cli::run(args, std::cout, std::cerr);
}
