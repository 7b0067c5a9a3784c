#include <iostream>
#include <string>
#include <vector>

#include "mer/cli/app.hpp"

int main(int argc, char** argv) {
  return mer::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
