#pragma once

// Gather index construction shared by the rearrangement kernels. Not installed.

#include <array>
#include <cstdint>
#include <vector>

#include "htcan/tensor.hpp"

namespace htcan::detail {

using Pos = std::array<std::int64_t, 4>;

/// Maps each output (n, c, h, w) to a source position; a negative h in the
/// returned position marks zero fill.
template <typename F>
std::vector<std::int64_t> build_index(const Shape& out, const Shape& src, F map) {
  std::vector<std::int64_t> index(static_cast<std::size_t>(out.numel()));
  std::size_t i = 0;
  for (std::int64_t n = 0; n < out.n(); ++n) {
    for (std::int64_t c = 0; c < out.c(); ++c) {
      for (std::int64_t h = 0; h < out.h(); ++h) {
        for (std::int64_t w = 0; w < out.w(); ++w) {
          const Pos s = map(n, c, h, w);
          index[i++] = s[2] < 0 ? -1 : ((s[0] * src.c() + s[1]) * src.h() + s[2]) * src.w() + s[3];
        }
      }
    }
  }
  return index;
}

}  // namespace htcan::detail
