#include "respoof/cli.hpp"

int main(int argc, char** argv) { return respoof::run_cli(argc, argv); }
