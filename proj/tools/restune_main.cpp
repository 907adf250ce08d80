#include "restune/cli.hpp"

int main(int argc, char** argv) { return restune::cli::dispatch(argc, argv); }
