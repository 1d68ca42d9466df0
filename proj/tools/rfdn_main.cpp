#include "rfdn/cli.hpp"

int main(int argc, char** argv) { return rfdn::cli::cli_main(argc, argv); }
