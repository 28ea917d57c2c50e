#include <iostream>

#include "hustat/cli.hpp"

int main(int argc, char** argv) { return hustat::run_cli(argc, argv, std::cout, std::cerr); }
