#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "amt/acceptance.hpp"

int main(int argc, char** argv) {
  amt::acceptance::Options opt;
  opt.on_result = [](const amt::acceptance::Result& r) {
    std::printf("%s\n", amt::acceptance::format_line(r).c_str());
    std::fflush(stdout);
  };
  std::vector<std::string> only(argv + 1, argv + argc);
  const auto results = amt::acceptance::run(opt, only);
  int failed = 0;
  for (const auto& r : results) failed += !r.passed;
  std::printf("%zu/%zu acceptance criteria passed\n", results.size() - static_cast<std::size_t>(failed), results.size());
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
