#include <iostream>

#include "chartab/cli.hpp"

int main(int argc, char** argv) { return chartab::cli::run(argc, argv, std::cout, std::cerr); }
