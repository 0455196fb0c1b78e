#pragma once

#include <filesystem>

#include "htcan/tensor.hpp"

namespace htcan {

/// Reads an 8-bit PNG as a (1, 3, h, w) tensor with values in [0, 1].
/// Grey and palette images are expanded to RGB; alpha is dropped.
template <typename T>
Tensor<T> read_png(const std::filesystem::path& path);

/// Writes channels 0..2 of a (1, 3, h, w) tensor as 8-bit RGB, quantizing
/// once with round-half-away-from-zero after clamping to [0, 1].
template <typename T>
void write_png(const std::filesystem::path& path, const Tensor<T>& image);

}  // namespace htcan
