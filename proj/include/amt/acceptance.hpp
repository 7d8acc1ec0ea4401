#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace amt::acceptance {

struct Result {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct Options {
  std::uint64_t seed = 20231;
  // Optional progress hook, called after each criterion.
  std::function<void(const Result&)> on_result;
};

/// Names of every criterion in run order.
std::vector<std::string> criteria();

/// Runs the named criteria (all when `only` is empty).
std::vector<Result> run(const Options& opt = {}, const std::vector<std::string>& only = {});

std::string format_line(const Result& r);

}  // namespace amt::acceptance
