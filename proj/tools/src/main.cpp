#include <iostream>

#include "onecast/cli/cli.hpp"

int main(int argc, char** argv) {
    return onecast::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
