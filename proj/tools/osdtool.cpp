#include "osd/cli.hpp"

int main(int argc, char** argv) { return osd::cli_main(argc, argv); }
