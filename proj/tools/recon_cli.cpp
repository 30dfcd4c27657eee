// Command-line driver; subcommands are wired up as the modules land.
#include <cstdio>

int main() {
  std::puts("recon: no subcommand");
  return 2;
}
