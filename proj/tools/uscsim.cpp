#include "uscsim/cli.hpp"

int main(int argc, char** argv) { return uscsim::cli::main(argc, argv); }
