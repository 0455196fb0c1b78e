#include "htcan/tensor.hpp"

#include <sstream>

namespace htcan {

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << dims[0] << ", " << dims[1] << ", " << dims[2] << ", " << dims[3] << ')';
  return os.str();
}

namespace {

void check_dims(const Shape& shape) {
  for (auto d : shape.dims) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape.str());
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<Impl>()) {
  check_dims(shape);
  impl_->shape = shape;
  impl_->data.assign(static_cast<std::size_t>(shape.numel()), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<Impl>()) {
  check_dims(shape);
  if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + shape.str());
  }
  impl_->shape = shape;
  impl_->data = std::move(values);
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  static const Shape empty{};
  return defined() ? impl_->shape : empty;
}

template <typename T>
std::span<T> Tensor<T>::values() {
  if (!defined()) return {};
  return {impl_->data.data(), impl_->data.size()};
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
  if (!defined()) return {};
  return {impl_->data.data(), impl_->data.size()};
}

template <typename T>
T& Tensor<T>::operator()(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
  const Shape& s = impl_->shape;
  return impl_->data[static_cast<std::size_t>(((n * s.c() + c) * s.h() + h) * s.w() + w)];
}

template <typename T>
const T& Tensor<T>::operator()(std::int64_t n, std::int64_t c, std::int64_t h,
                               std::int64_t w) const {
  const Shape& s = impl_->shape;
  return impl_->data[static_cast<std::size_t>(((n * s.c() + c) * s.h() + h) * s.w() + w)];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape().str());
  return impl_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (!defined()) throw UsageError("set_requires_grad on undefined tensor");
  impl_->requires_grad = on;
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::grad() const {
  if (!defined()) return {};
  if (impl_->grad.empty()) return Tensor(shape());
  return Tensor(shape(), impl_->grad);
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (defined()) impl_->grad.clear();
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  if (!defined()) return {};
  return Tensor(shape(), impl_->data);
}

namespace {

template <typename T>
Tape<T>*& tape_slot() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}

}  // namespace

template <typename T>
Tape<T>* active_tape() {
  return tape_slot<T>();
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(tape_slot<T>()) {
  tape_slot<T>() = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  tape_slot<T>() = previous_;
}

template <typename T>
NoTapeScope<T>::NoTapeScope() : previous_(tape_slot<T>()) {
  tape_slot<T>() = nullptr;
}

template <typename T>
NoTapeScope<T>::~NoTapeScope() {
  tape_slot<T>() = previous_;
}

template <typename T>
std::size_t backward(const Tensor<T>& loss, Tape<T>& tape) {
  if (!loss.defined() || loss.numel() != 1) {
    throw UsageError("backward needs a scalar loss, got shape " + loss.shape().str());
  }
  auto& seed = loss.impl()->grad;
  if (seed.empty()) seed.assign(1, T(0));
  seed[0] += T(1);

  std::size_t visited = 0;
  const auto& nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    ++visited;
    const auto& g = it->output->grad;
    if (g.empty()) continue;  // output did not influence the loss
    it->backward(std::span<const T>(g.data(), g.size()));
  }
  return visited;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

#define HTCAN_INSTANTIATE(T)                                           \
  template class Tensor<T>;                                            \
  template Tape<T>* active_tape<T>();                                  \
  template class TapeScope<T>;                                         \
  template class NoTapeScope<T>;                                       \
  template std::size_t backward<T>(const Tensor<T>&, Tape<T>&);        \
  template void require_same_shape<T>(const Tensor<T>&, const Tensor<T>&, const char*);

HTCAN_INSTANTIATE(float)
HTCAN_INSTANTIATE(double)

#undef HTCAN_INSTANTIATE

}  // namespace htcan
