#pragma once

// Parameter-spec builders and named-parameter layer calls shared by the
// network stages. Not installed.

#include <string>
#include <vector>

#include "htcan/ops.hpp"
#include "htcan/weights.hpp"

namespace htcan::detail {

constexpr double kProjStd = 0.02;

class SpecBuilder {
 public:
  /// weight (cout, cin_per_group, k, k) + bias (cout).
  void conv(const std::string& name, std::int64_t cout, std::int64_t cin, int k,
            bool zero = false) {
    specs_.push_back({name + ".weight", Shape{cout, cin, k, k},
                      zero ? InitKind::zeros : InitKind::kaiming_uniform, 0.0});
    specs_.push_back({name + ".bias", Shape{1, cout, 1, 1}, InitKind::zeros, 0.0});
  }
  /// Token projection, stored (out, in, 1, 1).
  void linear(const std::string& name, std::int64_t out, std::int64_t in, bool zero = false) {
    specs_.push_back({name + ".weight", Shape{out, in, 1, 1},
                      zero ? InitKind::zeros : InitKind::trunc_normal, kProjStd});
    specs_.push_back({name + ".bias", Shape{1, out, 1, 1}, InitKind::zeros, 0.0});
  }
  void norm(const std::string& name, std::int64_t c) {
    specs_.push_back({name + ".weight", Shape{1, c, 1, 1}, InitKind::ones, 0.0});
    specs_.push_back({name + ".bias", Shape{1, c, 1, 1}, InitKind::zeros, 0.0});
  }
  void tensor(const std::string& name, Shape shape, InitKind init, double value = 0.0) {
    specs_.push_back({name, shape, init, value});
  }
  std::vector<ParamSpec> take() { return std::move(specs_); }

 private:
  std::vector<ParamSpec> specs_;
};

template <typename T>
Tensor<T> conv(const ParamSet<T>& p, const std::string& name, const Tensor<T>& x, int padding,
               int groups = 1) {
  return conv2d(x, p.get(name + ".weight"), p.get(name + ".bias"), 1, padding, groups);
}

template <typename T>
Tensor<T> norm(const ParamSet<T>& p, const std::string& name, const Tensor<T>& x, double eps) {
  return layer_norm(x, p.get(name + ".weight"), p.get(name + ".bias"), eps);
}

template <typename T>
Tensor<T> lin(const ParamSet<T>& p, const std::string& name, const Tensor<T>& x) {
  return linear(x, p.get(name + ".weight"), p.get(name + ".bias"));
}

}  // namespace htcan::detail
