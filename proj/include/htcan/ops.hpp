#pragma once

// Differentiable numeric kernels. Every function records a backward rule on
// the active tape when one of its inputs requires a gradient.

#include <cstdint>
#include <string_view>
#include <vector>

#include "htcan/tensor.hpp"

namespace htcan {

enum class Activation { gelu, silu };

/// Parses "gelu" or "silu"; throws ConfigError otherwise.
Activation parse_activation(std::string_view name);
std::string_view to_string(Activation kind);

struct Pad2d {
  std::int64_t left = 0;
  std::int64_t right = 0;
  std::int64_t top = 0;
  std::int64_t bottom = 0;
};

/// Cross-correlation with zero padding. `weight` is (c_out, c_in/groups, kh, kw);
/// `bias` may be undefined, otherwise it holds c_out values.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride = 1, int padding = 0, int groups = 1);

/// Per-batch matrix product; tensors are viewed as (n*c, h, w) stacks.
template <typename T>
Tensor<T> matmul_batched(const Tensor<T>& a, const Tensor<T>& b);

/// x[..., k] * W[o, k] + b[o] over the last axis. `weight` is (out, in, 1, 1).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Softmax over the last axis, max-subtracted.
template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x);

/// Normalizes across channels at each (n, h, w) position.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps = 1e-6);

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> square(const Tensor<T>& x);
template <typename T>
Tensor<T> sqrt(const Tensor<T>& x);

// Elementwise with broadcasting: each dimension must match or be 1.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value);
template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T value);

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x);
template <typename T>
Tensor<T> mean_all(const Tensor<T>& x);

/// Mean over h and w; output (n, c, 1, 1).
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

/// Same data, new dimensions.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// out[i] = x[index[i]], or 0 where index[i] < 0. Every pure rearrangement
/// (shuffles, windows, flips, pads, crops) is expressed through this.
template <typename T>
Tensor<T> gather(const Tensor<T>& x, Shape out_shape, std::vector<std::int64_t> index);

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t count);

/// Swaps the h and w axes.
template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& x);

template <typename T>
Tensor<T> crop(const Tensor<T>& x, std::int64_t top, std::int64_t left, std::int64_t height,
               std::int64_t width);

/// Cyclic shift: out[h, w] = x[(h - dy) mod H, (w - dx) mod W].
template <typename T>
Tensor<T> roll(const Tensor<T>& x, std::int64_t dy, std::int64_t dx);

/// Mirror padding that excludes the edge sample: [a,b,c] padded by 1 on the
/// left gives [b,a,b,c]. Every pad must be smaller than its dimension.
template <typename T>
Tensor<T> reflect_pad2d(const Tensor<T>& x, Pad2d pads);

/// Mirror padding that folds repeatedly, so pads may exceed the dimension.
/// Identical to reflect_pad2d whenever the latter is defined.
template <typename T>
Tensor<T> reflect_pad2d_folded(const Tensor<T>& x, Pad2d pads);

/// Index of the sample mirrored into [0, n) without edge repetition.
std::int64_t reflect_index(std::int64_t i, std::int64_t n);

}  // namespace htcan
