#include "dposim/cli.hpp"

int main(int argc, char** argv) { return dposim::cli_main(argc, argv); }
