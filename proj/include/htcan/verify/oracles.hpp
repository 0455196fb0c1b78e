#pragma once

// Straightforward scalar-loop reference implementations. They share no code
// with the production kernels and exist only to check them.

#include <vector>

#include "htcan/stage1.hpp"
#include "htcan/stage2.hpp"
#include "htcan/training.hpp"

namespace htcan::verify {

Tensor<double> conv2d_oracle(const Tensor<double>& input, const Tensor<double>& weight,
                             const Tensor<double>& bias, int stride, int padding, int groups);

/// (batch, m, k) x (batch, k, n), tensors viewed as (n*c, h, w) stacks.
Tensor<double> matmul_oracle(const Tensor<double>& a, const Tensor<double>& b);

/// Window attention over (B, 1, T, C) tokens; `bias` is (1, heads, T, T) or undefined.
Tensor<double> attention_oracle(const Tensor<double>& tokens, const AttentionWeights<double>& w,
                                int heads, const Tensor<double>& bias);

StereoPair<double> scam_oracle(const Tensor<double>& fl, const Tensor<double>& fr,
                               const ScamWeights<double>& w, double eps);

/// Mean SSIM on single-channel or luma-converted RGB, per-window double loop.
double ssim_oracle(const Tensor<double>& a, const Tensor<double>& b);

/// Parameters after applying `grads` (one vector per step) from `p0`.
std::vector<double> adam_oracle(std::vector<double> p0, const std::vector<std::vector<double>>& grads,
                                const OptimConfig& cfg, double lr);

/// Mirror padding by explicit index enumeration, folding as often as needed.
Tensor<double> reflect_pad_oracle(const Tensor<double>& x, int left, int right, int top, int bottom);

/// Reflect-pad by p on every side, crop the 3p x 3p neighbourhood, stack
/// its nine p x p blocks along channels in raster order.
Tensor<double> multi_patch_oracle(const Tensor<double>& image, std::int64_t y, std::int64_t x,
                                  int p);

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b);

}  // namespace htcan::verify
