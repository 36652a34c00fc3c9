#include <iostream>

#include "gmmrf/cli.hpp"

int main(int argc, char** argv) { return gmmrf::cli::run(argc, argv, std::cout, std::cerr); }
