#include "mpcc/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return mpcc::cli::run_main(argc, argv, std::cout, std::cerr); }
