#include "playerval/cli.hpp"

int main(int argc, char** argv) { return playerval::cli::run(argc, argv); }
