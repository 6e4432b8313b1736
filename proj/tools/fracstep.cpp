#include "fracstep/cli.hpp"

int main(int argc, char** argv) { return fracstep::cli_main(argc, argv); }
