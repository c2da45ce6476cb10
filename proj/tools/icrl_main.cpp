#include <string>
#include <vector>

#include "icrl/cli/driver.hpp"

int main(int argc, char** argv) {
  return icrl::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
