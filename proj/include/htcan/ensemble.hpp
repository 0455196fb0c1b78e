#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "htcan/pixel_ops.hpp"

namespace htcan {

template <typename T>
using ImageFn = std::function<Tensor<T>(const Tensor<T>&)>;
template <typename T>
using PairFn = std::function<StereoPair<T>(const StereoPair<T>&)>;

/// Mean over `group` of inverse(t)(f(t(x))), accumulated in double.
/// Throws ContractError when an inverse-mapped output disagrees in shape
/// with the identity member's output.
template <typename T>
Tensor<T> self_ensemble_mono(const ImageFn<T>& f, const Tensor<T>& x,
                             const std::vector<GeomTransform>& group = mono_group());

template <typename T>
StereoPair<T> self_ensemble_stereo(const PairFn<T>& g, const StereoPair<T>& pair,
                                   const std::vector<GeomTransform>& group = stereo_group());

/// Pointwise weighted mean in double precision. Weights must be
/// non-negative and sum to 1 within 1e-6; shapes must agree.
template <typename T>
Tensor<T> model_ensemble(std::span<const Tensor<T>> preds, std::span<const double> weights);

struct EnsembleMember {
  std::string source;
  double weight = 0.0;
};

struct EnsembleSpec {
  std::vector<EnsembleMember> members;

  /// Throws UsageError on negative weights or a sum off 1 by more than 1e-6.
  void validate() const;
  std::vector<double> weights() const;
};

/// "1/7", "0.25", "4/7" -> double. Throws UsageError on malformed input.
double parse_weight(std::string_view text);

/// Rounds half away from zero after clamping to [0, 1] * 255.
std::uint8_t quantize_u8(double value);

}  // namespace htcan
