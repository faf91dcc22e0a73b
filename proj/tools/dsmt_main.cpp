#include "dsmt/cli.hpp"

int main(int argc, char** argv) { return dsmt::run_cli(argc, argv); }
