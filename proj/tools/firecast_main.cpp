#include "firecast/cli.hpp"

int main(int argc, char** argv) { return firecast::cli::run_cli(argc, argv); }
