#include <iostream>

#include "pairlab/cli.hpp"

int main(int argc, char** argv) { return pairlab::cli::run(argc, argv, std::cout, std::cerr); }
