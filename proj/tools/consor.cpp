#include <iostream>

#include "consor/cli.hpp"

int main(int argc, char** argv) { return consor::cli::run(argc, argv, std::cout, std::cerr); }
