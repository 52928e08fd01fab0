#include <iostream>

#include "ltfuse/cli.hpp"

int main(int argc, char** argv) { return ltfuse::cli::run(argc, argv, std::cout, std::cerr); }
