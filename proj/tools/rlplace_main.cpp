#include "rlplace/cli.hpp"

int main(int argc, char** argv) { return rlplace::cli::run_cli(argc, argv); }
