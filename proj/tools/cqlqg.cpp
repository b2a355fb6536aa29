#include <iostream>

#include "cqlqg/cli.hpp"

int main(int argc, char** argv) {
    return cqlqg::run_cli(argc, argv, std::cout, std::cerr);
}
