#include "cvrace/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return cvrace::cli::run(argc, argv, std::cout, std::cerr); }
