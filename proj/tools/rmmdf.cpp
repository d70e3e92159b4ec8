#include "rmmdf/cli.hpp"

int main(int argc, char** argv) { return rmmdf::cli::run(argc, argv); }
