#include <iostream>

#include "etd/cli/cli.hpp"

int main(int argc, char** argv) { return etd::cli::run_cli(argc, argv, std::cout, std::cerr); }
