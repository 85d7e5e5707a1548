#include "mts/cli.hpp"

int main(int argc, char** argv) { return mts::run_cli(argc, argv); }
