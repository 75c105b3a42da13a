#include "qphen/cli.hpp"

int main(int argc, char** argv) { return qphen::cli::run(argc, argv); }
