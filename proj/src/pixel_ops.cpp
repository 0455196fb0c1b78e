#include "htcan/pixel_ops.hpp"

#include <string>

#include "htcan/ops.hpp"
#include "index_map.hpp"

namespace htcan {

using detail::build_index;
using detail::Pos;

template <typename T>
void StereoPair<T>::validate(const char* where) const {
  if (!left.defined() || !right.defined()) {
    throw ShapeError(std::string(where) + ": stereo pair has an undefined view");
  }
  if (left.shape() != right.shape()) {
    throw ShapeError(std::string(where) + ": left " + left.shape().str() + " and right " +
                     right.shape().str() + " views differ");
  }
}

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r) {
  const Shape& s = x.shape();
  if (r < 1) throw ConfigError("pixel_shuffle: factor must be >= 1");
  const std::int64_t rr = std::int64_t{r} * r;
  if (s.c() % rr != 0) {
    throw ShapeError("pixel_shuffle: channels of " + s.str() + " not divisible by r^2 = " +
                     std::to_string(rr));
  }
  const Shape os{s.n(), s.c() / rr, s.h() * r, s.w() * r};
  return gather(x, os, build_index(os, s, [&](auto n, auto c, auto h, auto w) {
                  return Pos{n, c * rr + (h % r) * r + (w % r), h / r, w / r};
                }));
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r) {
  const Shape& s = x.shape();
  if (r < 1) throw ConfigError("pixel_unshuffle: factor must be >= 1");
  if (s.h() % r != 0 || s.w() % r != 0) {
    throw ShapeError("pixel_unshuffle: spatial dims of " + s.str() + " not divisible by r = " +
                     std::to_string(r));
  }
  const std::int64_t rr = std::int64_t{r} * r;
  const Shape os{s.n(), s.c() * rr, s.h() / r, s.w() / r};
  return gather(x, os, build_index(os, s, [&](auto n, auto c, auto h, auto w) {
                  const std::int64_t rem = c % rr;
                  return Pos{n, c / rr, h * r + rem / r, w * r + rem % r};
                }));
}

template <typename T>
Windows<T> window_partition(const Tensor<T>& x, int ws) {
  const Shape& s = x.shape();
  if (ws < 1) throw ConfigError("window_partition: window size must be >= 1");
  if (s.h() % ws != 0 || s.w() % ws != 0) {
    throw ShapeError("window_partition: " + s.str() + " not divisible by window " +
                     std::to_string(ws));
  }
  Windows<T> out;
  out.rows = s.h() / ws;
  out.cols = s.w() / ws;
  const std::int64_t per_image = out.rows * out.cols;
  const Shape os{s.n() * per_image, 1, std::int64_t{ws} * ws, s.c()};
  out.tokens = gather(x, os, build_index(os, s, [&](auto b, auto, auto t, auto ch) {
                        const std::int64_t wi = b % per_image;
                        return Pos{b / per_image, ch, (wi / out.cols) * ws + t / ws,
                                   (wi % out.cols) * ws + t % ws};
                      }));
  return out;
}

template <typename T>
Tensor<T> window_reverse(const Tensor<T>& tokens, std::int64_t rows, std::int64_t cols, int ws,
                         const Shape& dims) {
  const Shape& ts = tokens.shape();
  if (ws < 1 || rows * ws != dims.h() || cols * ws != dims.w() ||
      ts != Shape{dims.n() * rows * cols, 1, std::int64_t{ws} * ws, dims.c()}) {
    throw ShapeError("window_reverse: tokens " + ts.str() + " inconsistent with grid " +
                     std::to_string(rows) + "x" + std::to_string(cols) + ", window " +
                     std::to_string(ws) + " and output " + dims.str());
  }
  return gather(tokens, dims, build_index(dims, ts, [&](auto n, auto c, auto h, auto w) {
                  const std::int64_t b = n * rows * cols + (h / ws) * cols + w / ws;
                  return Pos{b, 0, (h % ws) * ws + w % ws, c};
                }));
}

namespace {

template <typename T>
Tensor<T> hflip(const Tensor<T>& x) {
  const Shape& s = x.shape();
  return gather(x, s, build_index(s, s, [&](auto n, auto c, auto h, auto w) {
                  return Pos{n, c, h, s.w() - 1 - w};
                }));
}

template <typename T>
Tensor<T> vflip(const Tensor<T>& x) {
  const Shape& s = x.shape();
  return gather(x, s, build_index(s, s, [&](auto n, auto c, auto h, auto w) {
                  return Pos{n, c, s.h() - 1 - h, w};
                }));
}

// Counter-clockwise quarter turn: out[i, j] = in[j, W - 1 - i].
template <typename T>
Tensor<T> rot90_once(const Tensor<T>& x) {
  const Shape& s = x.shape();
  const Shape os{s.n(), s.c(), s.w(), s.h()};
  return gather(x, os, build_index(os, s, [&](auto n, auto c, auto h, auto w) {
                  return Pos{n, c, w, s.w() - 1 - h};
                }));
}

}  // namespace

template <typename T>
Tensor<T> apply_geom(const Tensor<T>& x, const GeomTransform& t) {
  Tensor<T> out = x;
  if (t.hflip) out = hflip(out);
  if (t.vflip) out = vflip(out);
  const int k = ((t.rot90 % 4) + 4) % 4;
  for (int i = 0; i < k; ++i) out = rot90_once(out);
  return out;
}

template <typename T>
StereoPair<T> apply_geom(const StereoPair<T>& pair, const GeomTransform& t) {
  StereoPair<T> out = t.swap_views ? StereoPair<T>{pair.right, pair.left} : pair;
  out.left = apply_geom(out.left, t);
  out.right = apply_geom(out.right, t);
  return out;
}

GeomTransform inverse(const GeomTransform& t) {
  // The spatial part lives in the dihedral group of order 8; search the
  // (hflip, vflip, rot90) encodings for the one that undoes `t` on an
  // asymmetric probe. swap_views is its own inverse and commutes with the rest.
  std::vector<double> values(12);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<double>(i);
  const Tensor<double> probe(Shape{1, 1, 3, 4}, values);
  const Tensor<double> moved = apply_geom(probe, t);
  NoTapeScope<double> no_tape;
  for (bool v : {false, true}) {
    for (bool h : {false, true}) {
      for (int k = 0; k < 4; ++k) {
        const GeomTransform cand{h, v, k, t.swap_views};
        const Tensor<double> back = apply_geom(moved, cand);
        if (back.shape() != probe.shape()) continue;
        bool same = true;
        for (std::size_t i = 0; i < values.size() && same; ++i) {
          same = back.values()[i] == values[i];
        }
        if (same) return cand;
      }
    }
  }
  throw Error("inverse: no inverse found for geometric transform");
}

std::vector<GeomTransform> mono_group() {
  std::vector<GeomTransform> group;
  for (bool h : {false, true}) {
    for (int k = 0; k < 4; ++k) group.push_back(GeomTransform{h, false, k, false});
  }
  return group;
}

std::vector<GeomTransform> stereo_group() {
  std::vector<GeomTransform> group;
  for (bool swap : {false, true}) {
    for (bool v : {false, true}) {
      for (bool h : {false, true}) group.push_back(GeomTransform{h, v, 0, swap});
    }
  }
  return group;
}

template <typename T>
Tensor<T> pad_to_multiple(const Tensor<T>& x, int m) {
  if (m < 1) throw ConfigError("pad_to_multiple: multiple must be >= 1");
  const Shape& s = x.shape();
  const std::int64_t ph = (m - s.h() % m) % m;
  const std::int64_t pw = (m - s.w() % m) % m;
  if (ph == 0 && pw == 0) return x;
  return reflect_pad2d_folded(x, Pad2d{0, pw, 0, ph});
}

template <typename T>
Tensor<T> multi_patch_assemble_batch(const Tensor<T>& image,
                                     const std::vector<std::array<std::int64_t, 2>>& centers,
                                     int p) {
  const Shape& s = image.shape();
  if (p < 1) throw UsageError("multi_patch_assemble: patch size must be >= 1");
  for (const auto& [y, x] : centers) {
    if (y < 0 || x < 0 || y + p > s.h() || x + p > s.w()) {
      throw UsageError("multi_patch_assemble: center patch at (" + std::to_string(y) + ", " +
                       std::to_string(x) + ") size " + std::to_string(p) + " outside image " +
                       s.str());
    }
  }
  const std::int64_t C = s.c();
  const Shape os{static_cast<std::int64_t>(centers.size()) * s.n(), 9 * C, p, p};
  return gather(image, os, build_index(os, s, [&](auto b, auto c, auto h, auto w) {
                  const auto& [y, x] = centers[static_cast<std::size_t>(b / s.n())];
                  const std::int64_t block = c / C;
                  const std::int64_t sy = y + (block / 3 - 1) * p + h;
                  const std::int64_t sx = x + (block % 3 - 1) * p + w;
                  return Pos{b % s.n(), c % C, reflect_index(sy, s.h()), reflect_index(sx, s.w())};
                }));
}

template <typename T>
Tensor<T> multi_patch_assemble(const Tensor<T>& image, std::int64_t y, std::int64_t x, int p) {
  return multi_patch_assemble_batch(image, {{y, x}}, p);
}

#define HTCAN_INSTANTIATE(T)                                                                    \
  template struct StereoPair<T>;                                                                \
  template Tensor<T> pixel_shuffle(const Tensor<T>&, int);                                      \
  template Tensor<T> pixel_unshuffle(const Tensor<T>&, int);                                    \
  template Windows<T> window_partition(const Tensor<T>&, int);                                  \
  template Tensor<T> window_reverse(const Tensor<T>&, std::int64_t, std::int64_t, int,          \
                                    const Shape&);                                              \
  template Tensor<T> apply_geom(const Tensor<T>&, const GeomTransform&);                        \
  template StereoPair<T> apply_geom(const StereoPair<T>&, const GeomTransform&);                \
  template Tensor<T> pad_to_multiple(const Tensor<T>&, int);                                    \
  template Tensor<T> multi_patch_assemble(const Tensor<T>&, std::int64_t, std::int64_t, int);   \
  template Tensor<T> multi_patch_assemble_batch(                                                \
      const Tensor<T>&, const std::vector<std::array<std::int64_t, 2>>&, int);

HTCAN_INSTANTIATE(float)
HTCAN_INSTANTIATE(double)

#undef HTCAN_INSTANTIATE

}  // namespace htcan
