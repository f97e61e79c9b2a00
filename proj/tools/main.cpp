#include "vividforge/cli.hpp"

int main(int argc, char** argv) { return vividforge::run_cli(argc, argv); }
