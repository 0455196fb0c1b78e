#include "htcan/stage2.hpp"

#include <cmath>

#include "htcan/ops.hpp"
#include "index_map.hpp"
#include "layers.hpp"

namespace htcan {

using detail::build_index;
using detail::Pos;

namespace {

void require_positive(int v, const char* field) {
  if (v < 1) throw ConfigError(std::string("stage2.") + field + " must be >= 1, got " +
                               std::to_string(v));
}

// (n, c, h, w) -> (n, h, w, c)
template <typename T>
Tensor<T> to_rows(const Tensor<T>& x) {
  const Shape& s = x.shape();
  const Shape os{s.n(), s.h(), s.w(), s.c()};
  return gather(x, os, build_index(os, s, [](auto n, auto h, auto w, auto c) {
                  return Pos{n, c, h, w};
                }));
}

template <typename T>
Tensor<T> from_rows(const Tensor<T>& x) {
  const Shape& s = x.shape();
  const Shape os{s.n(), s.w(), s.c(), s.h()};
  return gather(x, os, build_index(os, s, [](auto n, auto c, auto h, auto w) {
                  return Pos{n, h, w, c};
                }));
}

std::string block_name(const std::string& prefix, int i) {
  return prefix + ".b" + std::to_string(i);
}
std::string scam_name(const std::string& prefix, int j) {
  return prefix + ".scam" + std::to_string(j);
}

}  // namespace

void Stage2Config::validate() const {
  require_positive(image_channels, "image_channels");
  require_positive(channels, "channels");
  require_positive(blocks, "blocks");
  require_positive(unshuffle, "unshuffle");
  require_positive(scam_every, "scam_every");
  require_positive(dw_expansion, "dw_expansion");
  require_positive(ffn_expansion, "ffn_expansion");
  if ((channels * dw_expansion) % 2 != 0 || (channels * ffn_expansion) % 2 != 0) {
    throw ConfigError("stage2: expanded channel counts must be even for the gate");
  }
  if (!(norm_eps > 0.0)) throw ConfigError("stage2.norm_eps must be > 0");
}

Stage2Config Stage2Config::tiny() {
  Stage2Config c;
  c.channels = 8;
  c.blocks = 4;
  c.unshuffle = 2;
  c.scam_every = 2;
  return c;
}

template <typename T>
Tensor<T> simple_gate(const Tensor<T>& x) {
  const std::int64_t c = x.shape().c();
  if (c % 2 != 0) {
    throw ShapeError("simple_gate: odd channel count in " + x.shape().str());
  }
  return mul(slice_channels(x, 0, c / 2), slice_channels(x, c / 2, c / 2));
}

template <typename T>
Tensor<T> naf_block_forward(const Tensor<T>& inp, const NafBlockWeights<T>& w, double eps) {
  Tensor<T> x = layer_norm(inp, w.norm1_w, w.norm1_b, eps);
  x = conv2d(x, w.conv1_w, w.conv1_b);
  x = conv2d(x, w.conv2_w, w.conv2_b, 1, 1, static_cast<int>(x.shape().c()));
  x = simple_gate(x);
  x = mul(x, conv2d(global_avg_pool(x), w.sca_w, w.sca_b));
  x = conv2d(x, w.conv3_w, w.conv3_b);
  const Tensor<T> y = add(inp, mul(x, w.beta));

  x = layer_norm(y, w.norm2_w, w.norm2_b, eps);
  x = simple_gate(conv2d(x, w.conv4_w, w.conv4_b));
  x = conv2d(x, w.conv5_w, w.conv5_b);
  return add(y, mul(x, w.gamma));
}

template <typename T>
StereoPair<T> scam_forward(const Tensor<T>& fl, const Tensor<T>& fr, const ScamWeights<T>& w,
                           double eps) {
  if (fl.shape() != fr.shape()) {
    throw ShapeError("scam: left " + fl.shape().str() + " and right " + fr.shape().str() +
                     " features differ");
  }
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(fl.shape().c())));
  const Tensor<T> q = to_rows(conv2d(layer_norm(fl, w.norm_l_w, w.norm_l_b, eps), w.l_proj1_w,
                                     w.l_proj1_b));
  const Tensor<T> k = to_rows(conv2d(layer_norm(fr, w.norm_r_w, w.norm_r_b, eps), w.r_proj1_w,
                                     w.r_proj1_b));
  const Tensor<T> vl = to_rows(conv2d(fl, w.l_proj2_w, w.l_proj2_b));
  const Tensor<T> vr = to_rows(conv2d(fr, w.r_proj2_w, w.r_proj2_b));

  // (n, h, w_left, w_right)
  const Tensor<T> scores = mul_scalar(matmul_batched(q, transpose_last2(k)), scale);
  const Tensor<T> r2l = matmul_batched(softmax_lastdim(scores), vr);
  const Tensor<T> l2r = matmul_batched(softmax_lastdim(transpose_last2(scores)), vl);
  return StereoPair<T>{add(fl, mul(from_rows(r2l), w.beta)),
                       add(fr, mul(from_rows(l2r), w.gamma))};
}

std::vector<ParamSpec> stage2_param_specs(const Stage2Config& cfg, const std::string& prefix) {
  cfg.validate();
  const std::int64_t C = cfg.channels;
  const std::int64_t dw = C * cfg.dw_expansion;
  const std::int64_t ffn = C * cfg.ffn_expansion;
  const std::int64_t io = std::int64_t{cfg.image_channels} * cfg.unshuffle * cfg.unshuffle;
  detail::SpecBuilder sb;
  sb.conv(prefix + ".intro", C, io, 3);
  for (int i = 0; i < cfg.blocks; ++i) {
    const std::string pre = block_name(prefix, i);
    sb.norm(pre + ".norm1", C);
    sb.conv(pre + ".conv1", dw, C, 1);
    sb.conv(pre + ".conv2", dw, 1, 3);
    sb.conv(pre + ".sca", dw / 2, dw / 2, 1);
    sb.conv(pre + ".conv3", C, dw / 2, 1);
    sb.tensor(pre + ".beta", Shape{1, C, 1, 1}, InitKind::zeros);
    sb.norm(pre + ".norm2", C);
    sb.conv(pre + ".conv4", ffn, C, 1);
    sb.conv(pre + ".conv5", C, ffn / 2, 1);
    sb.tensor(pre + ".gamma", Shape{1, C, 1, 1}, InitKind::zeros);
  }
  for (int j = 0; j < cfg.scam_count(); ++j) {
    const std::string pre = scam_name(prefix, j);
    sb.norm(pre + ".norm_l", C);
    sb.norm(pre + ".norm_r", C);
    sb.conv(pre + ".l_proj1", C, C, 1);
    sb.conv(pre + ".r_proj1", C, C, 1);
    sb.conv(pre + ".l_proj2", C, C, 1);
    sb.conv(pre + ".r_proj2", C, C, 1);
    sb.tensor(pre + ".beta", Shape{1, C, 1, 1}, InitKind::zeros);
    sb.tensor(pre + ".gamma", Shape{1, C, 1, 1}, InitKind::zeros);
  }
  sb.conv(prefix + ".up", io, C, 3, true);
  return sb.take();
}

void tie_stereo_views(WeightStore& store, const Stage2Config& cfg, const std::string& prefix) {
  const std::pair<const char*, const char*> twins[] = {
      {".norm_l.weight", ".norm_r.weight"}, {".norm_l.bias", ".norm_r.bias"},
      {".l_proj1.weight", ".r_proj1.weight"}, {".l_proj1.bias", ".r_proj1.bias"},
      {".l_proj2.weight", ".r_proj2.weight"}, {".l_proj2.bias", ".r_proj2.bias"},
      {".beta", ".gamma"}};
  for (int j = 0; j < cfg.scam_count(); ++j) {
    const std::string pre = scam_name(prefix, j);
    for (const auto& [l, r] : twins) store.set(pre + r, store.at(pre + l).clone());
  }
}

template <typename T>
Stage2Net<T>::Stage2Net(Stage2Config cfg, ParamSet<T> params, std::string prefix)
    : cfg_(std::move(cfg)), params_(std::move(params)), prefix_(std::move(prefix)) {
  cfg_.validate();
  for (const auto& spec : stage2_param_specs(cfg_, prefix_)) {
    const Tensor<T>& t = params_.get(spec.name);
    if (t.shape() != spec.shape) {
      throw ShapeError("weight '" + spec.name + "' has shape " + t.shape().str() + ", expected " +
                       spec.shape.str());
    }
  }
}

template <typename T>
Stage2Net<T> Stage2Net<T>::from_store(const Stage2Config& cfg, const WeightStore& store,
                                      const std::string& prefix) {
  return Stage2Net(cfg, ParamSet<T>::from_store(store, stage2_param_specs(cfg, prefix)), prefix);
}

template <typename T>
NafBlockWeights<T> Stage2Net<T>::block_weights(int block) const {
  const std::string pre = block_name(prefix_, block);
  auto g = [&](const char* name) { return params_.get(pre + name); };
  return NafBlockWeights<T>{g(".norm1.weight"), g(".norm1.bias"), g(".conv1.weight"),
                            g(".conv1.bias"),   g(".conv2.weight"), g(".conv2.bias"),
                            g(".sca.weight"),   g(".sca.bias"),     g(".conv3.weight"),
                            g(".conv3.bias"),   g(".beta"),         g(".norm2.weight"),
                            g(".norm2.bias"),   g(".conv4.weight"), g(".conv4.bias"),
                            g(".conv5.weight"), g(".conv5.bias"),   g(".gamma")};
}

template <typename T>
ScamWeights<T> Stage2Net<T>::scam_weights(int index) const {
  const std::string pre = scam_name(prefix_, index);
  auto g = [&](const char* name) { return params_.get(pre + name); };
  return ScamWeights<T>{g(".norm_l.weight"),  g(".norm_l.bias"),   g(".norm_r.weight"),
                        g(".norm_r.bias"),    g(".l_proj1.weight"), g(".l_proj1.bias"),
                        g(".r_proj1.weight"), g(".r_proj1.bias"),   g(".l_proj2.weight"),
                        g(".l_proj2.bias"),   g(".r_proj2.weight"), g(".r_proj2.bias"),
                        g(".beta"),           g(".gamma")};
}

template <typename T>
StereoPair<T> Stage2Net<T>::forward(const StereoPair<T>& pair) const {
  pair.validate(prefix_.c_str());
  const Shape& s = pair.shape();
  if (s.c() != cfg_.image_channels) {
    throw ShapeError(prefix_ + ": views " + s.str() + " must have " +
                     std::to_string(cfg_.image_channels) + " channels");
  }
  const int u = cfg_.unshuffle;
  auto embed = [&](const Tensor<T>& view) {
    return detail::conv(params_, prefix_ + ".intro", pixel_unshuffle(pad_to_multiple(view, u), u),
                        1);
  };
  Tensor<T> fl = embed(pair.left);
  Tensor<T> fr = embed(pair.right);
  int scam = 0;
  for (int i = 0; i < cfg_.blocks; ++i) {
    const NafBlockWeights<T> w = block_weights(i);
    fl = naf_block_forward(fl, w, cfg_.norm_eps);
    fr = naf_block_forward(fr, w, cfg_.norm_eps);
    if ((i + 1) % cfg_.scam_every == 0) {
      StereoPair<T> mixed = scam_forward(fl, fr, scam_weights(scam++), cfg_.norm_eps);
      fl = mixed.left;
      fr = mixed.right;
    }
  }
  auto head = [&](const Tensor<T>& f, const Tensor<T>& view) {
    const Tensor<T> up = pixel_shuffle(detail::conv(params_, prefix_ + ".up", f, 1), u);
    return add(crop(up, 0, 0, s.h(), s.w()), view);
  };
  return StereoPair<T>{head(fl, pair.left), head(fr, pair.right)};
}

template <typename T>
StereoPair<T> stage2_forward(const StereoPair<T>& pair, const WeightStore& weights,
                             const Stage2Config& cfg, const std::string& prefix) {
  return Stage2Net<T>::from_store(cfg, weights, prefix).forward(pair);
}

#define HTCAN_INSTANTIATE(T)                                                                   \
  template Tensor<T> simple_gate(const Tensor<T>&);                                            \
  template Tensor<T> naf_block_forward(const Tensor<T>&, const NafBlockWeights<T>&, double);   \
  template StereoPair<T> scam_forward(const Tensor<T>&, const Tensor<T>&,                      \
                                      const ScamWeights<T>&, double);                          \
  template class Stage2Net<T>;                                                                 \
  template StereoPair<T> stage2_forward(const StereoPair<T>&, const WeightStore&,              \
                                        const Stage2Config&, const std::string&);

HTCAN_INSTANTIATE(float)
HTCAN_INSTANTIATE(double)

#undef HTCAN_INSTANTIATE

}  // namespace htcan
