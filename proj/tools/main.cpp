#include "tabdpt/cli.hpp"

int main(int argc, char** argv) { return tabdpt::cli::main(argc, argv); }
