#include "mcrd/cli.hpp"

int main(int argc, char** argv) { return mcrd::cli::run(argc, argv); }
