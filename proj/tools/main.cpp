#include "gcfem/cli.hpp"

int main(int argc, char** argv) { return gcfem::run_cli(argc, argv); }
