#include "fsar/cli/cli.hpp"

int main(int argc, char** argv) { return fsar::cli::run(argc, argv); }
