#include "expadv/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return expadv::cli::run_cli(argc, argv, std::cout, std::cerr); }
