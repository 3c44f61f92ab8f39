#include <iostream>

#include "phasen/cli/commands.hpp"

int main(int argc, char** argv) {
  return phasen::cli::run_command(argc, argv, std::cout, std::cerr);
}
