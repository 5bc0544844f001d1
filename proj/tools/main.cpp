#include "vdpcr/cli.hpp"

int main(int argc, char** argv) { return vdpcr::cli_main(argc, argv); }
