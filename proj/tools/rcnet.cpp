#include <iostream>

#include "rcnet/commands.hpp"

int main(int argc, char** argv) { return rcnet::run_cli(argc, argv, std::cout, std::cerr); }
