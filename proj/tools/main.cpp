#include "bistab/cli.hpp"

int main(int argc, char** argv) { return bistab::run(argc, argv); }
