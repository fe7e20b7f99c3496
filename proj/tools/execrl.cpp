#include "execrl/cli.hpp"

int main(int argc, char** argv) { return execrl::cli::run(argc, argv); }
