#include <iostream>

#include "transnet/cli/cli.hpp"

int main(int argc, char** argv) {
  return transnet::cli::run_cli(argc, argv, std::cout, std::cerr);
}
