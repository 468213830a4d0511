#include "framediff/cli.hpp"

int main(int argc, char** argv) { return framediff::run_cli(argc, argv); }
