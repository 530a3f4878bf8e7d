#include "lenscam/cli.hpp"

int main(int argc, char** argv) { return lenscam::run_cli(argc, argv); }
