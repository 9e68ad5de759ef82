#include <iostream>

#include "cli.hpp"
#include "stconv/runtime.hpp"

int main(int argc, char** argv) {
  stconv::tune_allocator();
  return stconv::cli::run(argc, argv, std::cout, std::cerr);
}
