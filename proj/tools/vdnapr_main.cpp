#include <iostream>

#include "vdnapr/cli.hpp"

int main(int argc, char** argv) { return vdnapr::cli::run(argc, argv, std::cout, std::cerr); }
