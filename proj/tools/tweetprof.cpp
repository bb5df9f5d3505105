#include "tweetprof/cli.hpp"

int main(int argc, char** argv) { return tweetprof::run_command(argc, argv); }
