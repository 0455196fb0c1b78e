#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace htcan::verify {

struct SelftestCheck {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Production kernels against the scalar-loop oracles on random inputs.
std::vector<SelftestCheck> run_selftest(std::uint64_t seed);

std::string format_selftest_table(const std::vector<SelftestCheck>& checks);

}  // namespace htcan::verify
