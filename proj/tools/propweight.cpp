#include <iostream>

#include "propweight/cli.hpp"

int main(int argc, char** argv) {
  return propweight::run_cli(argc, argv, std::cout, std::cerr);
}
