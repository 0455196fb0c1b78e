#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "htcan/tensor.hpp"

namespace htcan::test {

template <typename T = double>
Tensor<T> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

template <typename T = double>
Tensor<T> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  return random_tensor<T>(s, rng, lo, hi);
}

// Owning copy, safe to iterate when `t` is a temporary.
template <typename T>
std::vector<T> vals(const Tensor<T>& t) {
  return std::vector<T>(t.values().begin(), t.values().end());
}

template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) return false;
  const auto x = a.values();
  const auto y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] != y[i]) return false;
  }
  return true;
}

template <typename T>
double max_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0.0;
  const auto x = a.values();
  const auto y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    m = std::max(m, d < 0 ? -d : d);
  }
  return m;
}

}  // namespace htcan::test
