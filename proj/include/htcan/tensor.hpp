#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "htcan/error.hpp"

namespace htcan {

/// Dimensions of a dense (batch, channel, height, width) array.
struct Shape {
  std::array<std::int64_t, 4> dims{0, 0, 0, 0};

  constexpr Shape() = default;
  constexpr Shape(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w)
      : dims{n, c, h, w} {}

  constexpr std::int64_t n() const { return dims[0]; }
  constexpr std::int64_t c() const { return dims[1]; }
  constexpr std::int64_t h() const { return dims[2]; }
  constexpr std::int64_t w() const { return dims[3]; }
  constexpr std::int64_t operator[](std::size_t i) const { return dims[i]; }
  constexpr std::int64_t numel() const { return dims[0] * dims[1] * dims[2] * dims[3]; }

  constexpr bool operator==(const Shape&) const = default;

  std::string str() const;
};

namespace detail {

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};

}  // namespace detail

/// Dense 4-D array of T (float or double) with optional gradient.
///
/// A Tensor is a handle: copies alias the same storage, which is what lets
/// the tape write gradients back into parameters. Use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Impl = detail::TensorImpl<T>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(shape, T(0)); }
  static Tensor full(Shape shape, T value) { return Tensor(shape, value); }
  static Tensor scalar(T value) { return Tensor(Shape{1, 1, 1, 1}, value); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t numel() const { return defined() ? shape().numel() : 0; }

  std::span<T> values();
  std::span<const T> values() const;

  T& operator()(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w);
  const T& operator()(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const;

  /// Value of a single-element tensor.
  T item() const;

  bool requires_grad() const { return defined() && impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return defined() && !impl_->grad.empty(); }
  /// Accumulated gradient, or zeros when nothing reached this tensor.
  Tensor grad() const;
  void zero_grad();

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape());
    auto src = values();
    auto dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<U>(src[i]);
    return out;
  }

  const std::shared_ptr<Impl>& impl() const { return impl_; }

 private:
  std::shared_ptr<Impl> impl_;
};

/// Ordered record of differentiable operations executed while the tape was
/// active on the current thread.
template <typename T>
class Tape {
 public:
  using Impl = detail::TensorImpl<T>;
  using BackwardFn = std::function<void(std::span<const T> grad_out)>;

  struct Node {
    std::shared_ptr<Impl> output;
    BackwardFn backward;
  };

  void record(std::shared_ptr<Impl> output, BackwardFn fn) {
    nodes_.push_back(Node{std::move(output), std::move(fn)});
  }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }
  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  std::vector<Node> nodes_;
};

/// Tape that ops record into on this thread, or nullptr.
template <typename T>
Tape<T>* active_tape();

/// Makes `tape` the recording target for the enclosing scope.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Suspends recording for the enclosing scope.
template <typename T>
class NoTapeScope {
 public:
  NoTapeScope();
  ~NoTapeScope();
  NoTapeScope(const NoTapeScope&) = delete;
  NoTapeScope& operator=(const NoTapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Replays the tape in reverse, accumulating dLoss/dx into every tensor that
/// requires grad and took part in computing `loss`. Returns the number of
/// nodes replayed.
template <typename T>
std::size_t backward(const Tensor<T>& loss, Tape<T>& tape);

/// Throws ShapeError unless both tensors have identical shapes.
template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what);

}  // namespace htcan
