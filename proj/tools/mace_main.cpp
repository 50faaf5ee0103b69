#include "mace/cli.hpp"

int main(int argc, char** argv) { return mace::cli::run(argc, argv); }
