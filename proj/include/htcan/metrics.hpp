#pragma once

#include <optional>
#include <string>
#include <vector>

#include "htcan/pixel_ops.hpp"

namespace htcan {

/// Keys cubic convolution kernel.
double cubic_kernel(double x, double a = -0.5);

/// Normalized taps of the antialiased bicubic downsampler for an integer
/// factor: offsets[k] (in input samples, relative to the output center) and
/// weights[k]. Identical for every output position.
struct BicubicTaps {
  std::vector<double> offsets;
  std::vector<double> weights;
};
BicubicTaps bicubic_taps(int factor);

/// Antialiased bicubic downsampling by an integer factor: the a = -0.5 kernel
/// stretched by the factor, output samples centered on input cells, source
/// indices clamped at the borders. Symmetric taps are summed in mirrored
/// pairs, so the result commutes bit-exactly with flips.
template <typename T>
Tensor<T> bicubic_downsample(const Tensor<T>& image, int factor);

/// Crops the bottom/right remainder so both dims are multiples of `factor`.
template <typename T>
Tensor<T> modcrop(const Tensor<T>& image, int factor);

enum class PsnrMode { joint, channel_mean };
enum class SsimMode { luma, rgb_mean };

/// -10 log10(MSE) for values in [0, 1]; +infinity when the inputs are identical.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, PsnrMode mode = PsnrMode::joint);

/// Mean SSIM with an 11 x 11 Gaussian window (sigma 1.5) over the valid
/// region, K1 = 0.01, K2 = 0.03, dynamic range 1. RGB inputs are reduced to
/// ITU-R 601 luma first unless `mode` asks for the per-channel mean.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, SsimMode mode = SsimMode::luma);

/// Y = 0.299 R + 0.587 G + 0.114 B; single-channel input is returned as is.
template <typename T>
Tensor<double> to_luma(const Tensor<T>& rgb);

struct EvalOptions {
  int crop_left = 64;
  PsnrMode psnr_mode = PsnrMode::joint;
  SsimMode ssim_mode = SsimMode::luma;
};

struct EvalRow {
  std::string name;
  std::optional<double> left_psnr;  // empty when the width does not exceed the crop
  std::optional<double> left_ssim;
  double pair_psnr = 0.0;
  double pair_ssim = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::optional<double> mean_left_psnr;
  std::optional<double> mean_left_ssim;
  double mean_pair_psnr = 0.0;
  double mean_pair_ssim = 0.0;

  std::string csv() const;
  /// Fixed-width table with a Left and a (Left+Right)/2 column group.
  std::string table() const;
};

template <typename T>
struct NamedPair {
  std::string name;
  StereoPair<T> pair;
};

/// Left-view scores with the `crop_left` leftmost columns removed; pair
/// scores are the mean of the two uncropped per-view scores. Rows are
/// matched by name and reported in name order.
template <typename T>
EvalReport evaluate_protocol(const std::vector<NamedPair<T>>& sr,
                             const std::vector<NamedPair<T>>& gt, const EvalOptions& opts = {});

}  // namespace htcan
