#include "qdiv/cli.hpp"

int main(int argc, char** argv) { return qdiv::cli::run(argc, argv); }
