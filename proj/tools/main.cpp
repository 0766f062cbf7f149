#include <iostream>

#include "peerstyle/cli.hpp"

int main(int argc, char** argv) {
  return peerstyle::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
