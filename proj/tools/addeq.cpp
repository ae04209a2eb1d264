#include "addeq/cli.hpp"

int main(int argc, char** argv) { return addeq::cli::main(argc, argv); }
