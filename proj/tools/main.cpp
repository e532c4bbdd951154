#include "caipi/cli.hpp"

int main(int argc, char** argv) { return caipi::cli_main(argc, argv); }
