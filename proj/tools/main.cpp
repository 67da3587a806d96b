#include "cli.hpp"

int main(int argc, char** argv) { return metarecon::cli::run(argc, argv); }
