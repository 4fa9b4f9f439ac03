#include <iostream>

#include "mfauc/cli.hpp"

int main(int argc, char** argv) {
  return mfauc::dispatch(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
