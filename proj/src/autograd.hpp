#pragma once

// Helpers shared by the differentiable kernels. Not installed.

#include <cmath>
#include <initializer_list>
#include <span>
#include <string>

#include "htcan/tensor.hpp"

namespace htcan::detail {

/// True when a tape is active and at least one input needs a gradient.
template <typename T>
bool tracking(std::initializer_list<const Tensor<T>*> inputs) {
  if (active_tape<T>() == nullptr) return false;
  for (const Tensor<T>* t : inputs) {
    if (t != nullptr && t->requires_grad()) return true;
  }
  return false;
}

/// Gradient buffer of `t`, allocated as zeros on first use.
template <typename T>
std::span<T> grad_of(const Tensor<T>& t) {
  auto& g = t.impl()->grad;
  if (g.empty()) g.assign(t.impl()->data.size(), T(0));
  return {g.data(), g.size()};
}

template <typename T, typename Fn>
void attach(Tensor<T>& out, Fn&& fn) {
  out.set_requires_grad(true);
  active_tape<T>()->record(out.impl(), typename Tape<T>::BackwardFn(std::forward<Fn>(fn)));
}

template <typename T>
void check_finite([[maybe_unused]] const Tensor<T>& out, [[maybe_unused]] const char* op) {
#ifndef NDEBUG
  for (T v : out.values()) {
    if (!std::isfinite(v)) throw Error(std::string(op) + ": non-finite output");
  }
#endif
}

}  // namespace htcan::detail
