#include <iostream>
#include <string>
#include <vector>

#include "hlm/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return hlm::run_cli(args, std::cout, std::cerr);
}
