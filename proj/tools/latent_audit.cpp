#include <iostream>
#include <string>
#include <vector>

#include "latent_audit/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return latent_audit::run_cli(args, std::cout, std::cerr);
}
