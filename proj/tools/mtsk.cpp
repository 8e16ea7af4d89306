#include "mtsk/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return mtsk::run_cli(argc, argv, std::cout, std::cerr); }
