#include <vector>

#include "dflmoe/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dflmoe::cli_main(args);
}
