// SPDX-License-Identifier: Apache-2.0
#include "actionspotter/cli.hpp"

#include <iostream>

int main(int argc, char **argv) {
    return actionspotter::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
