#include "semgraph/cli.hpp"

int main(int argc, char** argv) {
  return semgraph::cli::main_entry(argc, argv);
}
