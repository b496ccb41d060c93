#include <iostream>

#include "genekm/cli.hpp"

int main(int argc, char** argv) {
  return genekm::run_cli(argc, argv, std::cout, std::cerr);
}
