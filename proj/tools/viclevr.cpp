#include <iostream>

#include "viclevr/cli.hpp"

int main(int argc, char** argv) { return viclevr::run(argc, argv, std::cout, std::cerr); }
