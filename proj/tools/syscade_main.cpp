#include "syscade/cli.hpp"

int main(int argc, char** argv) { return syscade::run_cli(argc, argv); }
