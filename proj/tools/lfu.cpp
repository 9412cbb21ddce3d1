#include "lfu/pipeline.hpp"

int main(int argc, char** argv) { return lfu::cli_main(argc, argv); }
