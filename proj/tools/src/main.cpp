#include <iostream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "secoco/cli/commands.hpp"

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Keep freed tensor storage in the heap instead of returning it to the OS.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return secoco::cli::run_cli(argc, argv, std::cout, std::cerr);
}
