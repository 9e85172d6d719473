#include <iostream>

#include "qrambench/cli.hpp"

int main(int argc, char** argv) { return qrambench::run_cli(argc, argv, std::cout, std::cerr); }
