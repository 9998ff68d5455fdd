#include "protoextract/cli.hpp"

int main(int argc, char** argv) { return protoextract::run_cli(argc, argv); }
