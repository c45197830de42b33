#include <iostream>

#include "ornatag/cli.hpp"

int main(int argc, char** argv) { return ornatag::run_cli(argc, argv, std::cout, std::cerr); }
