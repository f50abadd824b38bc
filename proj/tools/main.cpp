#include "hadesfit/bench.hpp"

int main(int argc, char** argv) { return hadesfit::cli_main(argc, argv); }
