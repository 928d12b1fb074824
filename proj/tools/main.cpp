#include <iostream>

#include "sagda/cli.hpp"

int main(int argc, char** argv) { return sagda::run_cli(argc, argv, std::cout, std::cerr); }
