#include "i2s/cli.hpp"

int main(int argc, char** argv) { return i2s::run_cli(argc, argv); }
