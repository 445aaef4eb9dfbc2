#include <iostream>

#include "hvacf/cli.hpp"

int main(int argc, char** argv) { return hvacf::cli::main_entry(argc, argv, std::cout, std::cerr); }
