#include <iostream>

#include "surrogate_bridge/cli.hpp"

int main(int argc, char** argv) { return sbridge::run_cli(argc, argv, std::cout, std::cerr); }
