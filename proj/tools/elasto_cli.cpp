#include "elasto/cli.hpp"

int main(int argc, char** argv) { return elasto::cli::run(argc, argv); }
