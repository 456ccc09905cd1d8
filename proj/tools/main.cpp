#include "cli.hpp"

int main(int argc, char** argv) { return flexlog::run_cli(argc, argv); }
