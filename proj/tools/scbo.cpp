#include <iostream>

#include "scbo/cli.hpp"

int main(int argc, char** argv) { return scbo::cli_main(argc, argv, std::cout, std::cerr); }
