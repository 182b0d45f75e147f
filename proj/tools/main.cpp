#include "photomask/cli.hpp"

int main(int argc, char** argv) {
  return photomask::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
