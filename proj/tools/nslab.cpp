#include "nslab/cli.hpp"

int main(int argc, char** argv) { return nslab::run_cli(argc, argv); }
