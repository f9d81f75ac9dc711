#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return s2cast::cli::run(argc, argv, std::cout, std::cerr); }
