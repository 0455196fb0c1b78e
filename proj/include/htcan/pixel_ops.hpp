#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "htcan/tensor.hpp"

namespace htcan {

/// Left and right views of a rectified stereo pair, identical dimensions.
template <typename T>
struct StereoPair {
  Tensor<T> left;
  Tensor<T> right;

  const Shape& shape() const { return left.shape(); }
  /// Throws ShapeError if the views disagree.
  void validate(const char* where) const;
};

/// out[n, c, h*r+i, w*r+j] = in[n, c*r*r + i*r + j, h, w]
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r);

/// Exact inverse of pixel_shuffle.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r);

/// Non-overlapping ws x ws tiles as token rows: tokens has shape
/// (n * rows * cols, 1, ws * ws, c), windows in raster order per image.
template <typename T>
struct Windows {
  Tensor<T> tokens;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
};

template <typename T>
Windows<T> window_partition(const Tensor<T>& x, int ws);

template <typename T>
Tensor<T> window_reverse(const Tensor<T>& tokens, std::int64_t rows, std::int64_t cols, int ws,
                         const Shape& dims);

/// Composition applied in the order swap_views, hflip, vflip, rot90 (each
/// rot90 step is a counter-clockwise quarter turn).
struct GeomTransform {
  bool hflip = false;
  bool vflip = false;
  int rot90 = 0;
  bool swap_views = false;

  bool operator==(const GeomTransform&) const = default;
  bool is_identity() const { return !hflip && !vflip && rot90 % 4 == 0 && !swap_views; }
};

GeomTransform inverse(const GeomTransform& t);

/// The 8 dihedral transforms: 4 rotations, each with and without hflip.
std::vector<GeomTransform> mono_group();
/// {hflip, vflip, swap_views}^3.
std::vector<GeomTransform> stereo_group();

/// Spatial part of `t`; swap_views is ignored for a single tensor.
template <typename T>
Tensor<T> apply_geom(const Tensor<T>& x, const GeomTransform& t);

template <typename T>
StereoPair<T> apply_geom(const StereoPair<T>& pair, const GeomTransform& t);

/// Reflect-pads (folding as needed) so both spatial dims become multiples of `m`.
template <typename T>
Tensor<T> pad_to_multiple(const Tensor<T>& x, int m);

/// Stacks the p x p patch at top-left (y, x) together with its eight
/// neighbours along channels: channel = (bi * 3 + bj) * c + ch, where
/// (bi, bj) is the patch position in the 3 x 3 neighbourhood. The center
/// patch lands in channels [4c, 5c). Neighbours outside the image come from
/// reflect padding.
template <typename T>
Tensor<T> multi_patch_assemble(const Tensor<T>& image, std::int64_t y, std::int64_t x, int p);

/// Several centers at once, stacked along the batch axis: output batch index
/// is center_index * n + image_index.
template <typename T>
Tensor<T> multi_patch_assemble_batch(const Tensor<T>& image,
                                     const std::vector<std::array<std::int64_t, 2>>& centers,
                                     int p);

}  // namespace htcan
