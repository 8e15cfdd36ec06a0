#include <iostream>

#include "vhp/cli/cli.hpp"

int main(int argc, char** argv) { return vhp::cli::dispatch(argc, argv, std::cout, std::cerr); }
