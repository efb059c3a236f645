#include <iostream>

#include "kanbench/cli.hpp"

int main(int argc, char** argv) {
    return kanbench::cli_main(argc, argv, std::cout, std::cerr);
}
