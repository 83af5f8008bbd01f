#include "marsnav/cli.hpp"

int main(int argc, char** argv) { return marsnav::cli::run(argc, argv); }
