#include "lo/cli.hpp"

int main(int argc, char** argv) { return lo::run_cli(argc, argv); }
