#include "lsmg/cli.hpp"

int main(int argc, char** argv) { return lsmg::run_main(argc, argv); }
