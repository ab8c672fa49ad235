#include "denflow/cli.hpp"

int main(int argc, char** argv) { return denflow::cli::run(argc, argv); }
