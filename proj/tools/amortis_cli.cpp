#include "amortis/harness.hpp"

int main(int argc, char** argv) { return amortis::harness::cli_dispatch(argc, argv); }
