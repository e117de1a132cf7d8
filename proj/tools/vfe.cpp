#include "vfe/cli/commands.hpp"

int main(int argc, char** argv) { return vfe::cli::run(argc, argv); }
