#include <iostream>

#include "pstrat/cli.hpp"

int main(int argc, char** argv) { return pstrat::run_cli(argc, argv, std::cout, std::cerr); }
