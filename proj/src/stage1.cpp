#include "htcan/stage1.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "index_map.hpp"
#include "layers.hpp"

namespace htcan {

using detail::build_index;
using detail::Pos;

namespace {

std::string group_name(int g) { return "stage1.g" + std::to_string(g); }
std::string block_name(int g, int b) { return group_name(g) + ".b" + std::to_string(b); }

std::vector<int> upsample_steps(int scale) {
  std::vector<int> steps;
  if (scale == 1) return steps;
  if ((scale & (scale - 1)) == 0) {
    for (int s = scale; s > 1; s /= 2) steps.push_back(2);
  } else {
    steps.push_back(scale);
  }
  return steps;
}

void require_positive(int v, const char* field) {
  if (v < 1) throw ConfigError(std::string("stage1.") + field + " must be >= 1, got " +
                               std::to_string(v));
}

// (B, 1, T, C) -> (B, heads, T, C / heads)
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, int heads) {
  const Shape& s = x.shape();
  const std::int64_t d = s.w() / heads;
  const Shape os{s.n(), heads, s.h(), d};
  return gather(x, os, build_index(os, s, [&](auto b, auto hd, auto t, auto j) {
                  return Pos{b, 0, t, hd * d + j};
                }));
}

template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x) {
  const Shape& s = x.shape();
  const std::int64_t d = s.w();
  const Shape os{s.n(), 1, s.h(), s.c() * d};
  return gather(x, os, build_index(os, s, [&](auto b, auto, auto t, auto c) {
                  return Pos{b, c / d, t, c % d};
                }));
}

// Overlapping key windows: for each ws-strided window, the ows x ows region
// centered on it with zero fill outside the map. (n*rows*cols, 1, ows^2, C).
template <typename T>
Tensor<T> unfold_overlap(const Tensor<T>& x, int ws, int ows) {
  const Shape& s = x.shape();
  const std::int64_t rows = s.h() / ws;
  const std::int64_t cols = s.w() / ws;
  const std::int64_t pad = (ows - ws) / 2;
  const Shape os{s.n() * rows * cols, 1, std::int64_t{ows} * ows, s.c()};
  return gather(x, os, build_index(os, s, [&](auto b, auto, auto t, auto ch) {
                  const std::int64_t wi = b % (rows * cols);
                  const std::int64_t y = (wi / cols) * ws - pad + t / ows;
                  const std::int64_t xx = (wi % cols) * ws - pad + t % ows;
                  if (y < 0 || y >= s.h() || xx < 0 || xx >= s.w()) return Pos{0, 0, -1, 0};
                  return Pos{b / (rows * cols), ch, y, xx};
                }));
}

}  // namespace

void Stage1Config::validate() const {
  require_positive(image_channels, "image_channels");
  require_positive(channels, "channels");
  require_positive(groups, "groups");
  require_positive(blocks_per_group, "blocks_per_group");
  require_positive(heads, "heads");
  require_positive(scale, "scale");
  require_positive(patch, "patch");
  require_positive(ca_reduction, "ca_reduction");
  require_positive(mlp_ratio, "mlp_ratio");
  if (window < 2) throw ConfigError("stage1.window must be >= 2, got " + std::to_string(window));
  if (channels % heads != 0) {
    throw ConfigError("stage1.channels (" + std::to_string(channels) +
                      ") not divisible by heads (" + std::to_string(heads) + ")");
  }
  if (channels % ca_reduction != 0) {
    throw ConfigError("stage1.channels (" + std::to_string(channels) +
                      ") not divisible by ca_reduction (" + std::to_string(ca_reduction) + ")");
  }
  if (!(overlap_ratio >= 0.0 && overlap_ratio < 1.0)) {
    throw ConfigError("stage1.overlap_ratio must lie in [0, 1)");
  }
  if (!(norm_eps > 0.0)) throw ConfigError("stage1.norm_eps must be > 0");
}

int Stage1Config::overlap_window() const {
  const int extra = static_cast<int>(window * overlap_ratio);
  return window + 2 * (extra / 2);
}

Stage1Config Stage1Config::tiny() {
  Stage1Config c;
  c.channels = 8;
  c.groups = 1;
  c.blocks_per_group = 1;
  c.heads = 2;
  c.window = 4;
  c.patch = 8;
  c.ca_reduction = 4;
  return c;
}

template <typename T>
Tensor<T> attention_core(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int heads,
                         const Tensor<T>& bias, const Tensor<T>& mask) {
  const Shape& qs = q.shape();
  if (qs.c() != 1 || k.shape() != v.shape() || k.shape().c() != 1 || k.shape().n() != qs.n() ||
      k.shape().w() != qs.w()) {
    throw ShapeError("attention: incompatible q " + qs.str() + ", k " + k.shape().str() +
                     ", v " + v.shape().str());
  }
  if (heads < 1 || qs.w() % heads != 0) {
    throw ConfigError("attention: token dim " + std::to_string(qs.w()) +
                      " not divisible by heads " + std::to_string(heads));
  }
  const double d = static_cast<double>(qs.w() / heads);
  Tensor<T> scores = matmul_batched(split_heads(q, heads), transpose_last2(split_heads(k, heads)));
  scores = mul_scalar(scores, static_cast<T>(1.0 / std::sqrt(d)));
  if (bias.defined()) scores = add(scores, bias);
  if (mask.defined()) scores = add(scores, mask);
  return merge_heads(matmul_batched(softmax_lastdim(scores), split_heads(v, heads)));
}

template <typename T>
Tensor<T> window_attention(const Tensor<T>& tokens, const AttentionWeights<T>& w, int heads,
                           const Tensor<T>& bias, const Tensor<T>& mask) {
  const Tensor<T> q = linear(tokens, w.q_w, w.q_b);
  const Tensor<T> k = linear(tokens, w.k_w, w.k_b);
  const Tensor<T> v = linear(tokens, w.v_w, w.v_b);
  return linear(attention_core(q, k, v, heads, bias, mask), w.proj_w, w.proj_b);
}

std::vector<std::int64_t> relative_position_index(int ws, int key_ws) {
  const std::int64_t side = ws + key_ws - 1;
  std::vector<std::int64_t> index;
  index.reserve(static_cast<std::size_t>(ws) * ws * key_ws * key_ws);
  for (std::int64_t tq = 0; tq < std::int64_t{ws} * ws; ++tq) {
    for (std::int64_t tk = 0; tk < std::int64_t{key_ws} * key_ws; ++tk) {
      const std::int64_t di = tk / key_ws - tq / ws + ws - 1;
      const std::int64_t dj = tk % key_ws - tq % ws + ws - 1;
      index.push_back(di * side + dj);
    }
  }
  return index;
}

std::vector<ParamSpec> stage1_param_specs(const Stage1Config& cfg) {
  cfg.validate();
  const std::int64_t C = cfg.channels;
  const std::int64_t Cr = C / cfg.ca_reduction;
  const std::int64_t hidden = C * cfg.mlp_ratio;
  const int ws = cfg.window;
  const int ows = cfg.overlap_window();
  detail::SpecBuilder sb;
  sb.conv("stage1.conv_first", C, 9 * cfg.image_channels, 3);
  for (int g = 0; g < cfg.groups; ++g) {
    for (int b = 0; b < cfg.blocks_per_group; ++b) {
      const std::string pre = block_name(g, b);
      sb.norm(pre + ".norm1", C);
      sb.linear(pre + ".attn.q", C, C);
      sb.linear(pre + ".attn.k", C, C);
      sb.linear(pre + ".attn.v", C, C);
      sb.linear(pre + ".attn.proj", C, C, true);
      sb.tensor(pre + ".attn.rel_bias", Shape{1, 1, cfg.heads, (2 * ws - 1) * (2 * ws - 1)},
                InitKind::zeros);
      sb.conv(pre + ".cab.conv1", Cr, C, 3);
      sb.conv(pre + ".cab.conv2", C, Cr, 3, true);
      sb.conv(pre + ".cab.ca1", Cr, C, 1);
      sb.conv(pre + ".cab.ca2", C, Cr, 1);
      sb.tensor(pre + ".cab.scale", Shape{1, 1, 1, 1}, InitKind::constant, 0.01);
      sb.norm(pre + ".norm2", C);
      sb.linear(pre + ".mlp.fc1", hidden, C);
      sb.linear(pre + ".mlp.fc2", C, hidden, true);
    }
    const std::string pre = group_name(g) + ".ocab";
    sb.norm(pre + ".norm1", C);
    sb.linear(pre + ".q", C, C);
    sb.linear(pre + ".k", C, C);
    sb.linear(pre + ".v", C, C);
    sb.tensor(pre + ".rel_bias", Shape{1, 1, cfg.heads, std::int64_t{ws + ows - 1} * (ws + ows - 1)},
              InitKind::zeros);
    sb.linear(pre + ".proj", C, C, true);
    sb.norm(pre + ".norm2", C);
    sb.linear(pre + ".mlp.fc1", hidden, C);
    sb.linear(pre + ".mlp.fc2", C, hidden, true);
    sb.conv(group_name(g) + ".conv", C, C, 3, true);
  }
  sb.norm("stage1.norm", C);
  sb.conv("stage1.conv_after_body", C, C, 3);
  sb.conv("stage1.recon.conv_before", C, C, 3);
  const auto steps = upsample_steps(cfg.scale);
  for (std::size_t k = 0; k < steps.size(); ++k) {
    sb.conv("stage1.recon.up" + std::to_string(k), C * steps[k] * steps[k], C, 3);
  }
  sb.conv("stage1.conv_last", cfg.image_channels, C, 3);
  return sb.take();
}

template <typename T>
Stage1Net<T>::Stage1Net(Stage1Config cfg, ParamSet<T> params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  for (const auto& spec : stage1_param_specs(cfg_)) {
    const Tensor<T>& t = params_.get(spec.name);
    if (t.shape() != spec.shape) {
      throw ShapeError("weight '" + spec.name + "' has shape " + t.shape().str() + ", expected " +
                       spec.shape.str());
    }
  }
}

template <typename T>
Stage1Net<T> Stage1Net<T>::from_store(const Stage1Config& cfg, const WeightStore& store) {
  return Stage1Net(cfg, ParamSet<T>::from_store(store, stage1_param_specs(cfg)));
}

template <typename T>
AttentionWeights<T> Stage1Net<T>::attention_weights(const std::string& prefix) const {
  const auto& p = params_;
  return AttentionWeights<T>{p.get(prefix + ".q.weight"),    p.get(prefix + ".q.bias"),
                             p.get(prefix + ".k.weight"),    p.get(prefix + ".k.bias"),
                             p.get(prefix + ".v.weight"),    p.get(prefix + ".v.bias"),
                             p.get(prefix + ".proj.weight"), p.get(prefix + ".proj.bias")};
}

template <typename T>
Tensor<T> Stage1Net<T>::relative_bias(const std::string& table, int key_ws) const {
  const Tensor<T>& t = params_.get(table);
  const int ws = cfg_.window;
  const auto rel = relative_position_index(ws, key_ws);
  const std::int64_t tq = std::int64_t{ws} * ws;
  const std::int64_t tk = std::int64_t{key_ws} * key_ws;
  const Shape os{1, cfg_.heads, tq, tk};
  return gather(t, os, build_index(os, t.shape(), [&](auto, auto hd, auto i, auto j) {
                  return Pos{0, 0, hd, rel[static_cast<std::size_t>(i * tk + j)]};
                }));
}

template <typename T>
bool Stage1Net<T>::shifted(int block, std::int64_t h, std::int64_t w) const {
  return cfg_.shift && block % 2 == 1 && std::min(h, w) > cfg_.window;
}

template <typename T>
Tensor<T> Stage1Net<T>::shift_mask(std::int64_t n, std::int64_t h, std::int64_t w) const {
  const int ws = cfg_.window;
  const int s = ws / 2;
  const std::int64_t rows = h / ws;
  const std::int64_t cols = w / ws;
  const std::int64_t T2 = std::int64_t{ws} * ws;
  auto region = [&](std::int64_t i, std::int64_t len) {
    return i < len - ws ? 0 : (i < len - s ? 1 : 2);
  };
  Tensor<T> mask(Shape{n * rows * cols, 1, T2, T2});
  auto mv = mask.values();
  for (std::int64_t b = 0; b < n * rows * cols; ++b) {
    const std::int64_t wi = b % (rows * cols);
    const std::int64_t y0 = (wi / cols) * ws;
    const std::int64_t x0 = (wi % cols) * ws;
    for (std::int64_t t1 = 0; t1 < T2; ++t1) {
      const int l1 = region(y0 + t1 / ws, h) * 3 + region(x0 + t1 % ws, w);
      for (std::int64_t t2 = 0; t2 < T2; ++t2) {
        const int l2 = region(y0 + t2 / ws, h) * 3 + region(x0 + t2 % ws, w);
        mv[static_cast<std::size_t>((b * T2 + t1) * T2 + t2)] = l1 == l2 ? T(0) : T(-100);
      }
    }
  }
  return mask;
}

template <typename T>
Tensor<T> Stage1Net<T>::mlp(const Tensor<T>& x, const std::string& prefix) const {
  const Tensor<T> h = activation(detail::conv(params_, prefix + ".fc1", x, 0), cfg_.activation);
  return detail::conv(params_, prefix + ".fc2", h, 0);
}

template <typename T>
Tensor<T> Stage1Net<T>::cab(const Tensor<T>& x, const std::string& prefix) const {
  Tensor<T> z = activation(detail::conv(params_, prefix + ".conv1", x, 1), cfg_.activation);
  z = detail::conv(params_, prefix + ".conv2", z, 1);
  Tensor<T> s = relu(detail::conv(params_, prefix + ".ca1", global_avg_pool(z), 0));
  s = sigmoid(detail::conv(params_, prefix + ".ca2", s, 0));
  return mul(z, s);
}

template <typename T>
Tensor<T> Stage1Net<T>::hab(const Tensor<T>& x, int group, int block) const {
  const std::string pre = block_name(group, block);
  const Shape& s = x.shape();
  const int ws = cfg_.window;
  const int half = ws / 2;
  const Tensor<T> xn = detail::norm(params_, pre + ".norm1", x, cfg_.norm_eps);
  const Tensor<T> conv_branch = cab(xn, pre + ".cab");

  const bool sh = shifted(block, s.h(), s.w());
  const Tensor<T> xs = sh ? roll(xn, -half, -half) : xn;
  const Windows<T> win = window_partition(xs, ws);
  const Tensor<T> mask = sh ? shift_mask(s.n(), s.h(), s.w()) : Tensor<T>();
  Tensor<T> a = window_attention(win.tokens, attention_weights(pre + ".attn"), cfg_.heads,
                                 relative_bias(pre + ".attn.rel_bias", ws), mask);
  a = window_reverse(a, win.rows, win.cols, ws, s);
  if (sh) a = roll(a, half, half);

  const Tensor<T> y = add(add(x, a), mul(conv_branch, params_.get(pre + ".cab.scale")));
  return add(y, mlp(detail::norm(params_, pre + ".norm2", y, cfg_.norm_eps), pre + ".mlp"));
}

template <typename T>
Tensor<T> Stage1Net<T>::ocab(const Tensor<T>& x, int group) const {
  const std::string pre = group_name(group) + ".ocab";
  const int ws = cfg_.window;
  const int ows = cfg_.overlap_window();
  const Tensor<T> xn = detail::norm(params_, pre + ".norm1", x, cfg_.norm_eps);
  const Windows<T> q = window_partition(detail::conv(params_, pre + ".q", xn, 0), ws);
  const Tensor<T> k = unfold_overlap(detail::conv(params_, pre + ".k", xn, 0), ws, ows);
  const Tensor<T> v = unfold_overlap(detail::conv(params_, pre + ".v", xn, 0), ws, ows);
  Tensor<T> a = attention_core(q.tokens, k, v, cfg_.heads, relative_bias(pre + ".rel_bias", ows),
                               Tensor<T>());
  a = window_reverse(a, q.rows, q.cols, ws, x.shape());
  const Tensor<T> y = add(x, detail::conv(params_, pre + ".proj", a, 0));
  return add(y, mlp(detail::norm(params_, pre + ".norm2", y, cfg_.norm_eps), pre + ".mlp"));
}

template <typename T>
Tensor<T> Stage1Net<T>::rhag(const Tensor<T>& x, int group) const {
  Tensor<T> y = x;
  for (int b = 0; b < cfg_.blocks_per_group; ++b) y = hab(y, group, b);
  y = ocab(y, group);
  return add(x, detail::conv(params_, group_name(group) + ".conv", y, 1));
}

template <typename T>
Tensor<T> Stage1Net<T>::trunk(const Tensor<T>& x) const {
  Tensor<T> y = x;
  for (int g = 0; g < cfg_.groups; ++g) y = rhag(y, g);
  return y;
}

template <typename T>
Tensor<T> Stage1Net<T>::shallow(const Tensor<T>& padded_in) const {
  return detail::conv(params_, "stage1.conv_first", padded_in, 1);
}

template <typename T>
Tensor<T> Stage1Net<T>::reconstruct(const Tensor<T>& deep, const Tensor<T>& shallow_feat) const {
  const Tensor<T> t = detail::norm(params_, "stage1.norm", deep, cfg_.norm_eps);
  const Tensor<T> f = add(detail::conv(params_, "stage1.conv_after_body", t, 1), shallow_feat);
  Tensor<T> y =
      activation(detail::conv(params_, "stage1.recon.conv_before", f, 1), cfg_.activation);
  const auto steps = upsample_steps(cfg_.scale);
  for (std::size_t k = 0; k < steps.size(); ++k) {
    y = pixel_shuffle(detail::conv(params_, "stage1.recon.up" + std::to_string(k), y, 1),
                      steps[k]);
  }
  return detail::conv(params_, "stage1.conv_last", y, 1);
}

template <typename T>
Tensor<T> Stage1Net<T>::forward(const Tensor<T>& patch_in) const {
  const Shape& s = patch_in.shape();
  if (s.c() != 9 * cfg_.image_channels) {
    throw ShapeError("stage1: input " + s.str() + " must have 9 x " +
                     std::to_string(cfg_.image_channels) + " channels");
  }
  if (s.h() < 1 || s.w() < 1) throw ShapeError("stage1: empty input " + s.str());
  const Tensor<T> f0 = shallow(pad_to_multiple(patch_in, cfg_.window));
  const Tensor<T> out = reconstruct(trunk(f0), f0);
  return crop(out, 0, 0, s.h() * cfg_.scale, s.w() * cfg_.scale);
}

template <typename T>
Tensor<T> stage1_forward(const Tensor<T>& patch_in, const WeightStore& weights,
                         const Stage1Config& cfg) {
  return Stage1Net<T>::from_store(cfg, weights).forward(patch_in);
}

std::vector<std::int64_t> tile_starts(std::int64_t n, std::int64_t p) {
  std::vector<std::int64_t> starts;
  if (n <= p) return {0};
  for (std::int64_t s = 0; s + p <= n; s += p) starts.push_back(s);
  if (starts.back() + p < n) starts.push_back(n - p);
  return starts;
}

template <typename T>
Tensor<T> stage1_superresolve_image(const Tensor<T>& image, const Stage1Net<T>& net,
                                    const TilingConfig& tiling) {
  const Stage1Config& cfg = net.config();
  const int p = tiling.patch > 0 ? tiling.patch : cfg.patch;
  const int scale = cfg.scale;
  const Shape& s = image.shape();
  if (s.h() < 1 || s.w() < 1) throw ShapeError("stage1: empty image " + s.str());
  if (s.c() != cfg.image_channels) {
    throw ShapeError("stage1: image " + s.str() + " must have " +
                     std::to_string(cfg.image_channels) + " channels");
  }
  NoTapeScope<T> no_tape;

  const Tensor<T> work = reflect_pad2d_folded(
      image, Pad2d{0, std::max<std::int64_t>(0, p - s.w()), 0, std::max<std::int64_t>(0, p - s.h())});
  const Shape& ws = work.shape();
  const std::int64_t oh = ws.h() * scale;
  const std::int64_t ow = ws.w() * scale;
  const std::int64_t ps = std::int64_t{p} * scale;

  std::vector<std::array<std::int64_t, 2>> centers;
  for (auto y : tile_starts(ws.h(), p)) {
    for (auto x : tile_starts(ws.w(), p)) centers.push_back({y, x});
  }

  std::vector<double> sum(static_cast<std::size_t>(s.n() * s.c() * oh * ow), 0.0);
  std::vector<int> count(static_cast<std::size_t>(oh * ow), 0);
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, tiling.batch));
  for (std::size_t first = 0; first < centers.size(); first += chunk) {
    const std::size_t last = std::min(centers.size(), first + chunk);
    const std::vector<std::array<std::int64_t, 2>> part(centers.begin() + first,
                                                        centers.begin() + last);
    const Tensor<T> out = net.forward(multi_patch_assemble_batch(work, part, p));
    for (std::size_t t = 0; t < part.size(); ++t) {
      const std::int64_t y0 = part[t][0] * scale;
      const std::int64_t x0 = part[t][1] * scale;
      for (std::int64_t i = 0; i < ps; ++i) {
        for (std::int64_t j = 0; j < ps; ++j) ++count[(y0 + i) * ow + x0 + j];
      }
      for (std::int64_t n = 0; n < s.n(); ++n) {
        for (std::int64_t c = 0; c < s.c(); ++c) {
          for (std::int64_t i = 0; i < ps; ++i) {
            for (std::int64_t j = 0; j < ps; ++j) {
              sum[static_cast<std::size_t>(((n * s.c() + c) * oh + y0 + i) * ow + x0 + j)] +=
                  out(static_cast<std::int64_t>(t) * s.n() + n, c, i, j);
            }
          }
        }
      }
    }
  }

  Tensor<T> full(Shape{s.n(), s.c(), oh, ow});
  auto fv = full.values();
  for (std::size_t i = 0; i < fv.size(); ++i) {
    fv[i] = static_cast<T>(sum[i] / count[i % count.size()]);
  }
  if (ws.h() == s.h() && ws.w() == s.w()) return full;
  return crop(full, 0, 0, s.h() * scale, s.w() * scale);
}

#define HTCAN_INSTANTIATE(T)                                                                     \
  template Tensor<T> attention_core(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int,   \
                                    const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> window_attention(const Tensor<T>&, const AttentionWeights<T>&, int,         \
                                      const Tensor<T>&, const Tensor<T>&);                       \
  template class Stage1Net<T>;                                                                   \
  template Tensor<T> stage1_forward(const Tensor<T>&, const WeightStore&, const Stage1Config&);  \
  template Tensor<T> stage1_superresolve_image(const Tensor<T>&, const Stage1Net<T>&,            \
                                               const TilingConfig&);

HTCAN_INSTANTIATE(float)
HTCAN_INSTANTIATE(double)

#undef HTCAN_INSTANTIATE

}  // namespace htcan
