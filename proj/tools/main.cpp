#include "maglattice/cli.hpp"

int main(int argc, char** argv) { return maglattice::run_cli(argc, argv); }
