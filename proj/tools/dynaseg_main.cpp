#include "dynaseg/cli.hpp"

int main(int argc, char** argv) { return dynaseg::cli_main(argc, argv); }
