#include "airmoe/cli.hpp"

int main(int argc, char** argv) {
    return airmoe::run_command(std::vector<std::string>(argv + 1, argv + argc));
}
