#include "snappix/cli.hpp"

int main(int argc, char** argv) { return snappix::cli::run(argc, argv); }
