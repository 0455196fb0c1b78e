#include "htcan/ensemble.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>

namespace htcan {

namespace {

constexpr double kWeightTolerance = 1e-6;

template <typename T>
void accumulate(std::vector<double>& sum, const Tensor<T>& t, double w) {
  auto v = t.values();
  for (std::size_t i = 0; i < v.size(); ++i) sum[i] += w * static_cast<double>(v[i]);
}

template <typename T>
Tensor<T> materialize(const Shape& shape, const std::vector<double>& sum, double scale) {
  Tensor<T> out(shape);
  auto v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(sum[i] * scale);
  return out;
}

void require_group(const std::vector<GeomTransform>& group) {
  if (group.empty()) throw UsageError("self-ensemble: empty transform group");
}

double parse_number(std::string_view text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v)) {
    throw UsageError("invalid weight '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

template <typename T>
Tensor<T> self_ensemble_mono(const ImageFn<T>& f, const Tensor<T>& x,
                             const std::vector<GeomTransform>& group) {
  require_group(group);
  NoTapeScope<T> no_tape;
  Shape shape;
  std::vector<double> sum;
  for (std::size_t k = 0; k < group.size(); ++k) {
    const Tensor<T> y = apply_geom(f(apply_geom(x, group[k])), inverse(group[k]));
    if (k == 0) {
      shape = y.shape();
      sum.assign(static_cast<std::size_t>(shape.numel()), 0.0);
    } else if (y.shape() != shape) {
      throw ContractError("self-ensemble: member " + std::to_string(k) + " produced " +
                          y.shape().str() + ", expected " + shape.str());
    }
    accumulate(sum, y, 1.0);
  }
  return materialize<T>(shape, sum, 1.0 / static_cast<double>(group.size()));
}

template <typename T>
StereoPair<T> self_ensemble_stereo(const PairFn<T>& g, const StereoPair<T>& pair,
                                   const std::vector<GeomTransform>& group) {
  require_group(group);
  pair.validate("self_ensemble_stereo");
  NoTapeScope<T> no_tape;
  Shape shape;
  std::vector<double> sum_l, sum_r;
  for (std::size_t k = 0; k < group.size(); ++k) {
    const StereoPair<T> y = apply_geom(g(apply_geom(pair, group[k])), inverse(group[k]));
    y.validate("self_ensemble_stereo");
    if (k == 0) {
      shape = y.shape();
      sum_l.assign(static_cast<std::size_t>(shape.numel()), 0.0);
      sum_r.assign(sum_l.size(), 0.0);
    } else if (y.shape() != shape) {
      throw ContractError("self-ensemble: member " + std::to_string(k) + " produced " +
                          y.shape().str() + ", expected " + shape.str());
    }
    accumulate(sum_l, y.left, 1.0);
    accumulate(sum_r, y.right, 1.0);
  }
  const double scale = 1.0 / static_cast<double>(group.size());
  return StereoPair<T>{materialize<T>(shape, sum_l, scale), materialize<T>(shape, sum_r, scale)};
}

template <typename T>
Tensor<T> model_ensemble(std::span<const Tensor<T>> preds, std::span<const double> weights) {
  if (preds.empty()) throw UsageError("model_ensemble: no predictions");
  if (preds.size() != weights.size()) {
    throw UsageError("model_ensemble: " + std::to_string(preds.size()) + " predictions but " +
                     std::to_string(weights.size()) + " weights");
  }
  EnsembleSpec spec;
  for (double w : weights) spec.members.push_back({"", w});
  spec.validate();
  const Shape shape = preds[0].shape();
  std::vector<double> sum(static_cast<std::size_t>(shape.numel()), 0.0);
  for (std::size_t k = 0; k < preds.size(); ++k) {
    if (preds[k].shape() != shape) {
      throw UsageError("model_ensemble: prediction " + std::to_string(k) + " has shape " +
                       preds[k].shape().str() + ", expected " + shape.str());
    }
    accumulate(sum, preds[k], weights[k]);
  }
  return materialize<T>(shape, sum, 1.0);
}

void EnsembleSpec::validate() const {
  if (members.empty()) throw UsageError("ensemble: no members");
  double total = 0.0;
  for (const auto& m : members) {
    if (!(m.weight >= 0.0) || !std::isfinite(m.weight)) {
      throw UsageError("ensemble: weight of '" + m.source + "' must be non-negative");
    }
    total += m.weight;
  }
  if (std::abs(total - 1.0) > kWeightTolerance) {
    throw UsageError("ensemble: weights sum to " + std::to_string(total) + ", expected 1");
  }
}

std::vector<double> EnsembleSpec::weights() const {
  std::vector<double> w;
  for (const auto& m : members) w.push_back(m.weight);
  return w;
}

double parse_weight(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) return parse_number(text);
  const double num = parse_number(text.substr(0, slash));
  const double den = parse_number(text.substr(slash + 1));
  if (den == 0.0) throw UsageError("invalid weight '" + std::string(text) + "': zero denominator");
  return num / den;
}

std::uint8_t quantize_u8(double value) {
  const double scaled = std::clamp(value, 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::round(scaled));
}

#define HTCAN_INSTANTIATE(T)                                                                  \
  template Tensor<T> self_ensemble_mono(const ImageFn<T>&, const Tensor<T>&,                  \
                                        const std::vector<GeomTransform>&);                   \
  template StereoPair<T> self_ensemble_stereo(const PairFn<T>&, const StereoPair<T>&,         \
                                              const std::vector<GeomTransform>&);             \
  template Tensor<T> model_ensemble(std::span<const Tensor<T>>, std::span<const double>);

HTCAN_INSTANTIATE(float)
HTCAN_INSTANTIATE(double)

#undef HTCAN_INSTANTIATE

}  // namespace htcan
