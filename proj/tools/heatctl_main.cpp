#include <string>
#include <vector>

#include "heatctl/cost_lab.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return heatctl::cost_lab::cli_main(args);
}
