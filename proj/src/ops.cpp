#include "htcan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include "autograd.hpp"
#include "index_map.hpp"

namespace htcan {

using detail::attach;
using detail::check_finite;
using detail::grad_of;
using detail::tracking;

Activation parse_activation(std::string_view name) {
  if (name == "gelu") return Activation::gelu;
  if (name == "silu") return Activation::silu;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected gelu or silu)");
}

std::string_view to_string(Activation kind) {
  return kind == Activation::gelu ? "gelu" : "silu";
}

std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n <= 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  std::int64_t m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

// Elementwise map with derivative df(x, y).
template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df, const char* name) {
  Tensor<T> out(x.shape());
  auto xs = x.values();
  auto ys = out.values();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = f(xs[i]);
  check_finite(out, name);
  if (tracking<T>({&x})) {
    attach(out, [x, out, df](std::span<const T> g) {
      auto gx = grad_of(x);
      auto xs = x.values();
      auto ys = out.values();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xs[i], ys[i]);
    });
  }
  return out;
}

struct Broadcast {
  Shape out;
  std::array<std::int64_t, 4> stride_a{};
  std::array<std::int64_t, 4> stride_b{};
};

Broadcast broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  Broadcast bc;
  std::array<std::int64_t, 4> sa{a.c() * a.h() * a.w(), a.h() * a.w(), a.w(), 1};
  std::array<std::int64_t, 4> sb{b.c() * b.h() * b.w(), b.h() * b.w(), b.w(), 1};
  for (std::size_t d = 0; d < 4; ++d) {
    if (a[d] != b[d] && a[d] != 1 && b[d] != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + a.str() + " with " + b.str());
    }
    bc.out.dims[d] = std::max(a[d], b[d]);
    bc.stride_a[d] = a[d] == 1 ? 0 : sa[d];
    bc.stride_b[d] = b[d] == 1 ? 0 : sb[d];
  }
  return bc;
}

// Visits every output position with the flat offsets into a and b.
template <typename F>
void for_each_broadcast(const Broadcast& bc, F f) {
  const Shape& o = bc.out;
  std::int64_t idx = 0;
  for (std::int64_t n = 0; n < o.n(); ++n) {
    for (std::int64_t c = 0; c < o.c(); ++c) {
      for (std::int64_t h = 0; h < o.h(); ++h) {
        const std::int64_t ba = n * bc.stride_a[0] + c * bc.stride_a[1] + h * bc.stride_a[2];
        const std::int64_t bb = n * bc.stride_b[0] + c * bc.stride_b[1] + h * bc.stride_b[2];
        for (std::int64_t w = 0; w < o.w(); ++w, ++idx) {
          f(idx, ba + w * bc.stride_a[3], bb + w * bc.stride_b[3]);
        }
      }
    }
  }
}

enum class BinaryKind { add, sub, mul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryKind kind, const char* name) {
  const Broadcast bc = broadcast_shapes(a.shape(), b.shape(), name);
  Tensor<T> out(bc.out);
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.values();
  for_each_broadcast(bc, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
    switch (kind) {
      case BinaryKind::add: ov[o] = av[ia] + bv[ib]; break;
      case BinaryKind::sub: ov[o] = av[ia] - bv[ib]; break;
      case BinaryKind::mul: ov[o] = av[ia] * bv[ib]; break;
    }
  });
  check_finite(out, name);
  if (tracking<T>({&a, &b})) {
    attach(out, [a, b, bc, kind](std::span<const T> g) {
      const bool need_a = a.requires_grad();
      const bool need_b = b.requires_grad();
      std::span<T> ga = need_a ? grad_of(a) : std::span<T>{};
      std::span<T> gb = need_b ? grad_of(b) : std::span<T>{};
      auto av = a.values();
      auto bv = b.values();
      for_each_broadcast(bc, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
        switch (kind) {
          case BinaryKind::add:
            if (need_a) ga[ia] += g[o];
            if (need_b) gb[ib] += g[o];
            break;
          case BinaryKind::sub:
            if (need_a) ga[ia] += g[o];
            if (need_b) gb[ib] -= g[o];
            break;
          case BinaryKind::mul:
            if (need_a) ga[ia] += g[o] * bv[ib];
            if (need_b) gb[ib] += g[o] * av[ia];
            break;
        }
      });
    });
  }
  return out;
}

// dst[i] += a * src[i * s]; the unit-stride case vectorizes.
template <typename T>
inline void axpy_strided(T* __restrict dst, const T* __restrict src, T a, std::int64_t n,
                         std::int64_t s) {
  if (s == 1) {
    for (std::int64_t i = 0; i < n; ++i) dst[i] += a * src[i];
  } else {
    for (std::int64_t i = 0; i < n; ++i) dst[i] += a * src[i * s];
  }
}

// dst[i * s] += a * src[i]
template <typename T>
inline void axpy_scatter(T* __restrict dst, const T* __restrict src, T a, std::int64_t n,
                         std::int64_t s) {
  if (s == 1) {
    for (std::int64_t i = 0; i < n; ++i) dst[i] += a * src[i];
  } else {
    for (std::int64_t i = 0; i < n; ++i) dst[i * s] += a * src[i];
  }
}

// sum_i a[i] * b[i * s] with eight fixed lanes, so the order is deterministic.
template <typename T>
inline T dot_strided(const T* a, const T* b, std::int64_t n, std::int64_t s) {
  T lane[8] = {};
  std::int64_t i = 0;
  if (s == 1) {
    for (; i + 8 <= n; i += 8) {
      for (int k = 0; k < 8; ++k) lane[k] += a[i + k] * b[i + k];
    }
  }
  for (; i < n; ++i) lane[0] += a[i] * b[i * s];
  return ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding, int groups) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
  if (groups < 1 || is.c() % groups != 0 || ws.n() % groups != 0) {
    throw ConfigError("conv2d: groups=" + std::to_string(groups) + " must divide input channels " +
                      std::to_string(is.c()) + " and output channels " + std::to_string(ws.n()));
  }
  const std::int64_t cin_g = is.c() / groups;
  if (ws.c() != cin_g) {
    throw ShapeError("conv2d: weight " + ws.str() + " incompatible with input " + is.str() +
                     " (groups=" + std::to_string(groups) + ")");
  }
  if (bias.defined() && bias.numel() != ws.n()) {
    throw ShapeError("conv2d: bias " + bias.shape().str() + " does not match weight " + ws.str());
  }
  const std::int64_t N = is.n(), H = is.h(), W = is.w();
  const std::int64_t Cout = ws.n(), KH = ws.h(), KW = ws.w();
  const std::int64_t OH = floor_div(H + 2 * padding - KH, stride) + 1;
  const std::int64_t OW = floor_div(W + 2 * padding - KW, stride) + 1;
  if (OH < 1 || OW < 1) {
    throw ShapeError("conv2d: kernel " + ws.str() + " larger than padded input " + is.str());
  }
  const std::int64_t cout_g = Cout / groups;
  const std::int64_t s = stride, p = padding;

  Tensor<T> out(Shape{N, Cout, OH, OW});
  const T* in = input.values().data();
  const T* wt = weight.values().data();
  const T* bs = bias.defined() ? bias.values().data() : nullptr;
  T* op = out.values().data();

  // Output column range [lo, hi] whose input column stays inside [0, W).
  auto col_range = [=](std::int64_t kw) {
    const std::int64_t lo = std::max<std::int64_t>(0, ceil_div(p - kw, s));
    const std::int64_t hi = std::min<std::int64_t>(OW - 1, floor_div(W - 1 + p - kw, s));
    return std::pair{lo, hi};
  };
  auto row_range = [=](std::int64_t kh) {
    const std::int64_t lo = std::max<std::int64_t>(0, ceil_div(p - kh, s));
    const std::int64_t hi = std::min<std::int64_t>(OH - 1, floor_div(H - 1 + p - kh, s));
    return std::pair{lo, hi};
  };

#pragma omp parallel for schedule(static)
  for (std::int64_t job = 0; job < N * Cout; ++job) {
    const std::int64_t n = job / Cout, oc = job % Cout, g = oc / cout_g;
    T* plane = op + job * OH * OW;
    std::fill(plane, plane + OH * OW, bs ? bs[oc] : T(0));
    for (std::int64_t icg = 0; icg < cin_g; ++icg) {
      const T* src = in + (n * is.c() + g * cin_g + icg) * H * W;
      for (std::int64_t kh = 0; kh < KH; ++kh) {
        const auto [oh_lo, oh_hi] = row_range(kh);
        for (std::int64_t kw = 0; kw < KW; ++kw) {
          const T wv = wt[((oc * cin_g + icg) * KH + kh) * KW + kw];
          const auto [ow_lo, ow_hi] = col_range(kw);
          for (std::int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
            const T* row = src + (oh * s + kh - p) * W;
            T* dst = plane + oh * OW;
            if (ow_hi >= ow_lo) axpy_strided(dst + ow_lo, row + ow_lo * s + kw - p, wv, ow_hi - ow_lo + 1, s);
          }
        }
      }
    }
  }
  check_finite(out, "conv2d");

  if (tracking<T>({&input, &weight, &bias})) {
    attach(out, [=](std::span<const T> go) {
      const T* in = input.values().data();
      const T* wt = weight.values().data();
      if (input.requires_grad()) {
        T* gi = grad_of(input).data();
#pragma omp parallel for schedule(static)
        for (std::int64_t job = 0; job < N * is.c(); ++job) {
          const std::int64_t n = job / is.c(), ic = job % is.c();
          const std::int64_t g = ic / cin_g, icg = ic % cin_g;
          T* dst = gi + job * H * W;
          for (std::int64_t oc = g * cout_g; oc < (g + 1) * cout_g; ++oc) {
            const T* gsrc = go.data() + (n * Cout + oc) * OH * OW;
            for (std::int64_t kh = 0; kh < KH; ++kh) {
              const auto [oh_lo, oh_hi] = row_range(kh);
              for (std::int64_t kw = 0; kw < KW; ++kw) {
                const T wv = wt[((oc * cin_g + icg) * KH + kh) * KW + kw];
                const auto [ow_lo, ow_hi] = col_range(kw);
                for (std::int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
                  T* row = dst + (oh * s + kh - p) * W;
                  const T* grow = gsrc + oh * OW;
                  if (ow_hi >= ow_lo) {
                    axpy_scatter(row + ow_lo * s + kw - p, grow + ow_lo, wv, ow_hi - ow_lo + 1, s);
                  }
                }
              }
            }
          }
        }
      }
      if (weight.requires_grad()) {
        T* gw = grad_of(weight).data();
#pragma omp parallel for schedule(static)
        for (std::int64_t oc = 0; oc < Cout; ++oc) {
          const std::int64_t g = oc / cout_g;
          for (std::int64_t icg = 0; icg < cin_g; ++icg) {
            for (std::int64_t kh = 0; kh < KH; ++kh) {
              const auto [oh_lo, oh_hi] = row_range(kh);
              for (std::int64_t kw = 0; kw < KW; ++kw) {
                const auto [ow_lo, ow_hi] = col_range(kw);
                T acc = T(0);
                for (std::int64_t n = 0; n < N; ++n) {
                  const T* src = in + (n * is.c() + g * cin_g + icg) * H * W;
                  const T* gsrc = go.data() + (n * Cout + oc) * OH * OW;
                  for (std::int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
                    const T* row = src + (oh * s + kh - p) * W;
                    const T* grow = gsrc + oh * OW;
                    if (ow_hi >= ow_lo) {
                      acc += dot_strided(grow + ow_lo, row + ow_lo * s + kw - p, ow_hi - ow_lo + 1, s);
                    }
                  }
                }
                gw[((oc * cin_g + icg) * KH + kh) * KW + kw] += acc;
              }
            }
          }
        }
      }
      if (bias.defined() && bias.requires_grad()) {
        T* gb = grad_of(bias).data();
        for (std::int64_t oc = 0; oc < Cout; ++oc) {
          T acc = T(0);
          for (std::int64_t n = 0; n < N; ++n) {
            const T* gsrc = go.data() + (n * Cout + oc) * OH * OW;
            for (std::int64_t i = 0; i < OH * OW; ++i) acc += gsrc[i];
          }
          gb[oc] += acc;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// matmul / linear

template <typename T>
Tensor<T> matmul_batched(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.n() != bs.n() || as.c() != bs.c() || as.w() != bs.h()) {
    throw ShapeError("matmul_batched: cannot multiply " + as.str() + " by " + bs.str());
  }
  const std::int64_t B = as.n() * as.c(), M = as.h(), K = as.w(), N = bs.w();
  Tensor<T> out(Shape{as.n(), as.c(), M, N});
  const T* ap = a.values().data();
  const T* bp = b.values().data();
  T* op = out.values().data();
#pragma omp parallel for schedule(static)
  for (std::int64_t row = 0; row < B * M; ++row) {
    const std::int64_t bt = row / M;
    const T* arow = ap + row * K;
    const T* bmat = bp + bt * K * N;
    T* orow = op + row * N;
    for (std::int64_t k = 0; k < K; ++k) {
      const T av = arow[k];
      const T* brow = bmat + k * N;
      for (std::int64_t j = 0; j < N; ++j) orow[j] += av * brow[j];
    }
  }
  check_finite(out, "matmul_batched");
  if (tracking<T>({&a, &b})) {
    attach(out, [a, b, B, M, K, N](std::span<const T> go) {
      const T* ap = a.values().data();
      const T* bp = b.values().data();
      if (a.requires_grad()) {
        T* ga = grad_of(a).data();
#pragma omp parallel for schedule(static)
        for (std::int64_t row = 0; row < B * M; ++row) {
          const std::int64_t bt = row / M;
          const T* grow = go.data() + row * N;
          for (std::int64_t k = 0; k < K; ++k) {
            const T* brow = bp + (bt * K + k) * N;
            T acc = T(0);
            for (std::int64_t j = 0; j < N; ++j) acc += grow[j] * brow[j];
            ga[row * K + k] += acc;
          }
        }
      }
      if (b.requires_grad()) {
        T* gb = grad_of(b).data();
#pragma omp parallel for schedule(static)
        for (std::int64_t bt = 0; bt < B; ++bt) {
          for (std::int64_t i = 0; i < M; ++i) {
            const T* grow = go.data() + (bt * M + i) * N;
            for (std::int64_t k = 0; k < K; ++k) {
              const T av = ap[(bt * M + i) * K + k];
              T* gbrow = gb + (bt * K + k) * N;
              for (std::int64_t j = 0; j < N; ++j) gbrow[j] += av * grow[j];
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (ws.c() != xs.w() || ws.h() != 1 || ws.w() != 1) {
    throw ShapeError("linear: weight " + ws.str() + " incompatible with input " + xs.str());
  }
  if (bias.defined() && bias.numel() != ws.n()) {
    throw ShapeError("linear: bias " + bias.shape().str() + " does not match weight " + ws.str());
  }
  const std::int64_t R = xs.n() * xs.c() * xs.h(), K = xs.w(), O = ws.n();
  Tensor<T> out(Shape{xs.n(), xs.c(), xs.h(), O});
  const T* xp = x.values().data();
  const T* wp = weight.values().data();
  const T* bp = bias.defined() ? bias.values().data() : nullptr;
  T* op = out.values().data();
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < R; ++r) {
    const T* xr = xp + r * K;
    for (std::int64_t o = 0; o < O; ++o) {
      T acc = bp ? bp[o] : T(0);
      const T* wr = wp + o * K;
      for (std::int64_t k = 0; k < K; ++k) acc += xr[k] * wr[k];
      op[r * O + o] = acc;
    }
  }
  check_finite(out, "linear");
  if (tracking<T>({&x, &weight, &bias})) {
    attach(out, [x, weight, bias, R, K, O](std::span<const T> go) {
      const T* xp = x.values().data();
      const T* wp = weight.values().data();
      if (x.requires_grad()) {
        T* gx = grad_of(x).data();
        for (std::int64_t r = 0; r < R; ++r) {
          for (std::int64_t o = 0; o < O; ++o) {
            const T g = go[r * O + o];
            for (std::int64_t k = 0; k < K; ++k) gx[r * K + k] += g * wp[o * K + k];
          }
        }
      }
      if (weight.requires_grad()) {
        T* gw = grad_of(weight).data();
        for (std::int64_t r = 0; r < R; ++r) {
          for (std::int64_t o = 0; o < O; ++o) {
            const T g = go[r * O + o];
            for (std::int64_t k = 0; k < K; ++k) gw[o * K + k] += g * xp[r * K + k];
          }
        }
      }
      if (bias.defined() && bias.requires_grad()) {
        T* gb = grad_of(bias).data();
        for (std::int64_t r = 0; r < R; ++r) {
          for (std::int64_t o = 0; o < O; ++o) gb[o] += go[r * O + o];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// normalizations

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  const std::int64_t L = x.shape().w();
  if (L < 1) throw ShapeError("softmax_lastdim: empty last dimension in " + x.shape().str());
  const std::int64_t R = x.numel() / L;
  Tensor<T> out(x.shape());
  const T* xp = x.values().data();
  T* yp = out.values().data();
  for (std::int64_t r = 0; r < R; ++r) {
    const T* xr = xp + r * L;
    T* yr = yp + r * L;
    T mx = xr[0];
    for (std::int64_t i = 1; i < L; ++i) mx = std::max(mx, xr[i]);
    T sum = T(0);
    for (std::int64_t i = 0; i < L; ++i) {
      yr[i] = std::exp(xr[i] - mx);
      sum += yr[i];
    }
    for (std::int64_t i = 0; i < L; ++i) yr[i] /= sum;
  }
  check_finite(out, "softmax_lastdim");
  if (tracking<T>({&x})) {
    attach(out, [x, out, R, L](std::span<const T> go) {
      T* gx = grad_of(x).data();
      const T* yp = out.values().data();
      for (std::int64_t r = 0; r < R; ++r) {
        const T* yr = yp + r * L;
        const T* gr = go.data() + r * L;
        T dot = T(0);
        for (std::int64_t i = 0; i < L; ++i) dot += gr[i] * yr[i];
        for (std::int64_t i = 0; i < L; ++i) gx[r * L + i] += yr[i] * (gr[i] - dot);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps) {
  const Shape& s = x.shape();
  const std::int64_t C = s.c(), HW = s.h() * s.w();
  if (gamma.numel() != C || beta.numel() != C) {
    throw ShapeError("layer_norm: gamma " + gamma.shape().str() + " / beta " +
                     beta.shape().str() + " do not match channels of " + s.str());
  }
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be > 0");
  Tensor<T> out(s);
  Tensor<T> xhat(s);
  std::vector<T> inv_std(static_cast<std::size_t>(s.n() * HW));
  const T* xp = x.values().data();
  const T* gp = gamma.values().data();
  const T* bp = beta.values().data();
  T* yp = out.values().data();
  T* hp = xhat.values().data();
  for (std::int64_t n = 0; n < s.n(); ++n) {
    for (std::int64_t pos = 0; pos < HW; ++pos) {
      const std::int64_t base = n * C * HW + pos;
      T mean = T(0);
      for (std::int64_t c = 0; c < C; ++c) mean += xp[base + c * HW];
      mean /= static_cast<T>(C);
      T var = T(0);
      for (std::int64_t c = 0; c < C; ++c) {
        const T d = xp[base + c * HW] - mean;
        var += d * d;
      }
      var /= static_cast<T>(C);
      const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
      inv_std[static_cast<std::size_t>(n * HW + pos)] = is;
      for (std::int64_t c = 0; c < C; ++c) {
        const T h = (xp[base + c * HW] - mean) * is;
        hp[base + c * HW] = h;
        yp[base + c * HW] = gp[c] * h + bp[c];
      }
    }
  }
  check_finite(out, "layer_norm");
  if (tracking<T>({&x, &gamma, &beta})) {
    attach(out, [x, gamma, beta, xhat, inv_std = std::move(inv_std), s, C, HW](
                    std::span<const T> go) {
      const T* hp = xhat.values().data();
      const T* gp = gamma.values().data();
      std::span<T> gx = x.requires_grad() ? grad_of(x) : std::span<T>{};
      std::span<T> gg = gamma.requires_grad() ? grad_of(gamma) : std::span<T>{};
      std::span<T> gb = beta.requires_grad() ? grad_of(beta) : std::span<T>{};
      for (std::int64_t n = 0; n < s.n(); ++n) {
        for (std::int64_t pos = 0; pos < HW; ++pos) {
          const std::int64_t base = n * C * HW + pos;
          T mean_d = T(0), mean_dh = T(0);
          for (std::int64_t c = 0; c < C; ++c) {
            const T d = go[base + c * HW] * gp[c];
            mean_d += d;
            mean_dh += d * hp[base + c * HW];
          }
          mean_d /= static_cast<T>(C);
          mean_dh /= static_cast<T>(C);
          const T is = inv_std[static_cast<std::size_t>(n * HW + pos)];
          for (std::int64_t c = 0; c < C; ++c) {
            const std::int64_t i = base + c * HW;
            if (!gx.empty()) gx[i] += is * (go[i] * gp[c] - mean_d - hp[i] * mean_dh);
            if (!gg.empty()) gg[c] += go[i] * hp[i];
            if (!gb.empty()) gb[c] += go[i];
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
  switch (kind) {
    case Activation::gelu:
      return unary(
          x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>)); },
          [](T v, T) {
            const T cdf = T(0.5) * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>));
            const T pdf = std::exp(T(-0.5) * v * v) * std::numbers::inv_sqrtpi_v<T> /
                          std::numbers::sqrt2_v<T>;
            return cdf + v * pdf;
          },
          "gelu");
    case Activation::silu:
      return unary(
          x, [](T v) { return v / (T(1) + std::exp(-v)); },
          [](T v, T) {
            const T sg = T(1) / (T(1) + std::exp(-v));
            return sg * (T(1) + v * (T(1) - sg));
          },
          "silu");
  }
  throw ConfigError("activation: unknown kind");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); }, "sigmoid");
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); },
      "relu");
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; }, "square");
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; }, "sqrt");
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::add, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::sub, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::mul, "mul");
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  return unary(x, [value](T v) { return v + value; }, [](T, T) { return T(1); }, "add_scalar");
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T value) {
  return unary(
      x, [value](T v) { return v * value; }, [value](T, T) { return value; }, "mul_scalar");
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.values()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (tracking<T>({&x})) {
    attach(out, [x](std::span<const T> go) {
      auto gx = grad_of(x);
      for (auto& g : gx) g += go[0];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean_all of empty tensor");
  T acc = T(0);
  for (T v : x.values()) acc += v;
  const T inv = T(1) / static_cast<T>(x.numel());
  Tensor<T> out = Tensor<T>::scalar(acc * inv);
  if (tracking<T>({&x})) {
    attach(out, [x, inv](std::span<const T> go) {
      auto gx = grad_of(x);
      for (auto& g : gx) g += go[0] * inv;
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const Shape& s = x.shape();
  const std::int64_t HW = s.h() * s.w();
  if (HW == 0) throw ShapeError("global_avg_pool of empty plane " + s.str());
  Tensor<T> out(Shape{s.n(), s.c(), 1, 1});
  const T* xp = x.values().data();
  const T inv = T(1) / static_cast<T>(HW);
  for (std::int64_t p = 0; p < s.n() * s.c(); ++p) {
    T acc = T(0);
    for (std::int64_t i = 0; i < HW; ++i) acc += xp[p * HW + i];
    out.values()[static_cast<std::size_t>(p)] = acc * inv;
  }
  if (tracking<T>({&x})) {
    attach(out, [x, HW, inv](std::span<const T> go) {
      T* gx = grad_of(x).data();
      for (std::size_t p = 0; p < go.size(); ++p) {
        const T g = go[p] * inv;
        for (std::int64_t i = 0; i < HW; ++i) gx[static_cast<std::int64_t>(p) * HW + i] += g;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// rearrangements

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape.numel() != x.numel()) {
    throw ShapeError("reshape: cannot view " + x.shape().str() + " as " + shape.str());
  }
  Tensor<T> out(shape, std::vector<T>(x.values().begin(), x.values().end()));
  if (tracking<T>({&x})) {
    attach(out, [x](std::span<const T> go) {
      auto gx = grad_of(x);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> gather(const Tensor<T>& x, Shape out_shape, std::vector<std::int64_t> index) {
  if (static_cast<std::int64_t>(index.size()) != out_shape.numel()) {
    throw ShapeError("gather: index length " + std::to_string(index.size()) +
                     " does not match output " + out_shape.str());
  }
  const std::int64_t limit = x.numel();
  Tensor<T> out(out_shape);
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < index.size(); ++i) {
    const std::int64_t j = index[i];
    if (j >= limit) throw ShapeError("gather: index out of range for " + x.shape().str());
    ov[i] = j < 0 ? T(0) : xv[static_cast<std::size_t>(j)];
  }
  if (tracking<T>({&x})) {
    attach(out, [x, index = std::move(index)](std::span<const T> go) {
      auto gx = grad_of(x);
      for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= 0) gx[static_cast<std::size_t>(index[i])] += go[i];
      }
    });
  }
  return out;
}

namespace {

using detail::build_index;
using detail::Pos;

template <typename T>
Tensor<T> pad_with(const Tensor<T>& x, Pad2d pads, bool strict) {
  const Shape& s = x.shape();
  if (pads.left < 0 || pads.right < 0 || pads.top < 0 || pads.bottom < 0) {
    throw ConfigError("reflect_pad2d: negative padding");
  }
  if (strict && (pads.left >= s.w() || pads.right >= s.w() || pads.top >= s.h() ||
                 pads.bottom >= s.h())) {
    throw ConfigError("reflect_pad2d: padding must be smaller than the padded dimension of " +
                      s.str());
  }
  if (s.h() == 0 || s.w() == 0) throw ShapeError("reflect_pad2d: empty input " + s.str());
  const Shape os{s.n(), s.c(), s.h() + pads.top + pads.bottom, s.w() + pads.left + pads.right};
  return gather(x, os, build_index(os, s, [&](auto n, auto c, auto h, auto w) {
                  return Pos{n, c, reflect_index(h - pads.top, s.h()),
                             reflect_index(w - pads.left, s.w())};
                }));
}

}  // namespace

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t count) {
  const Shape& s = x.shape();
  if (begin < 0 || count < 0 || begin + count > s.c()) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + s.str());
  }
  const Shape os{s.n(), count, s.h(), s.w()};
  return gather(x, os, build_index(os, s, [&](auto n, auto c, auto h, auto w) {
                  return Pos{n, c + begin, h, w};
                }));
}

template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& x) {
  const Shape& s = x.shape();
  const Shape os{s.n(), s.c(), s.w(), s.h()};
  return gather(x, os, build_index(os, s, [](auto n, auto c, auto h, auto w) {
                  return Pos{n, c, w, h};
                }));
}

template <typename T>
Tensor<T> crop(const Tensor<T>& x, std::int64_t top, std::int64_t left, std::int64_t height,
               std::int64_t width) {
  const Shape& s = x.shape();
  if (top < 0 || left < 0 || height < 0 || width < 0 || top + height > s.h() ||
      left + width > s.w()) {
    throw ShapeError("crop: window outside " + s.str());
  }
  const Shape os{s.n(), s.c(), height, width};
  return gather(x, os, build_index(os, s, [&](auto n, auto c, auto h, auto w) {
                  return Pos{n, c, h + top, w + left};
                }));
}

template <typename T>
Tensor<T> roll(const Tensor<T>& x, std::int64_t dy, std::int64_t dx) {
  const Shape& s = x.shape();
  auto wrap = [](std::int64_t i, std::int64_t n) { return ((i % n) + n) % n; };
  return gather(x, s, build_index(s, s, [&](auto n, auto c, auto h, auto w) {
                  return Pos{n, c, wrap(h - dy, s.h()), wrap(w - dx, s.w())};
                }));
}

template <typename T>
Tensor<T> reflect_pad2d(const Tensor<T>& x, Pad2d pads) {
  return pad_with(x, pads, true);
}

template <typename T>
Tensor<T> reflect_pad2d_folded(const Tensor<T>& x, Pad2d pads) {
  return pad_with(x, pads, false);
}

#define HTCAN_INSTANTIATE(T)                                                                   \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int,   \
                            int);                                                              \
  template Tensor<T> matmul_batched(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> softmax_lastdim(const Tensor<T>&);                                       \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double); \
  template Tensor<T> activation(const Tensor<T>&, Activation);                                \
  template Tensor<T> sigmoid(const Tensor<T>&);                                               \
  template Tensor<T> relu(const Tensor<T>&);                                                  \
  template Tensor<T> square(const Tensor<T>&);                                                \
  template Tensor<T> sqrt(const Tensor<T>&);                                                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                         \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);                                         \
  template Tensor<T> sum_all(const Tensor<T>&);                                               \
  template Tensor<T> mean_all(const Tensor<T>&);                                              \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                       \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                        \
  template Tensor<T> gather(const Tensor<T>&, Shape, std::vector<std::int64_t>);              \
  template Tensor<T> slice_channels(const Tensor<T>&, std::int64_t, std::int64_t);            \
  template Tensor<T> transpose_last2(const Tensor<T>&);                                       \
  template Tensor<T> crop(const Tensor<T>&, std::int64_t, std::int64_t, std::int64_t,         \
                          std::int64_t);                                                      \
  template Tensor<T> roll(const Tensor<T>&, std::int64_t, std::int64_t);                      \
  template Tensor<T> reflect_pad2d(const Tensor<T>&, Pad2d);                                  \
  template Tensor<T> reflect_pad2d_folded(const Tensor<T>&, Pad2d);

HTCAN_INSTANTIATE(float)
HTCAN_INSTANTIATE(double)

#undef HTCAN_INSTANTIATE

}  // namespace htcan
