#include "promptgate/cli.hpp"

int main(int argc, char** argv) { return promptgate::cli::run(argc, argv); }
