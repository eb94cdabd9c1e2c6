#include <iostream>

#include "mplex/cli/commands.hpp"

int main(int argc, char** argv) {
    return mplex::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
