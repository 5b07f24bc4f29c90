#include "prlstm/cli.hpp"

int main(int argc, char** argv) { return prlstm::cli::cli_main(argc, argv); }
