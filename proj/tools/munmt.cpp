#include "munmt/cli/app.hpp"

int main(int argc, char** argv) { return munmt::cli::run(argc, argv); }
