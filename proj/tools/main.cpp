#include <iostream>

#include "pmd_cli.hpp"

int main(int argc, char** argv) { return pmd::cli::run_cli(argc, argv, std::cout, std::cerr); }
