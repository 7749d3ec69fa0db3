#include "memcap/cli.hpp"

int main(int argc, char** argv) { return memcap::run_command(argc, argv); }
