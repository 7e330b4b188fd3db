#include <iostream>

#include "hop/cli.hpp"

int main(int argc, char** argv) { return hop::cli::main(argc, argv, std::cout, std::cerr); }
