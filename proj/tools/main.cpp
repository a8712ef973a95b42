#include "cli.hpp"

int main(int argc, char** argv) { return spinread::cli::run(argc, argv); }
