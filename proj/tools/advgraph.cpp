#include "advgraph/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return advgraph::run_command(argc, argv, std::cout, std::cerr); }
