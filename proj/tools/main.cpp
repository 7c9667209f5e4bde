#include <iostream>
#include <string>
#include <vector>

#include "budgetflow/app.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return budgetflow::app::run_cli(args, std::cout, std::cerr);
}
