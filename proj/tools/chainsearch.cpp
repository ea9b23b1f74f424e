#include <chainsearch/cli.hpp>

int main(int argc, char** argv) { return chainsearch::cli::run_cli(argc, argv); }
