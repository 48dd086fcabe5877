#include "maskmatch/cli/app.hpp"

int main(int argc, char** argv) { return maskmatch::cli::run(argc, argv); }
