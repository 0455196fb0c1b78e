#include "htcan/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "htcan/ensemble.hpp"
#include "htcan/metrics.hpp"
#include "htcan/ops.hpp"
#include "index_map.hpp"

namespace htcan {

using detail::build_index;
using detail::Pos;

namespace {

template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& items) {
  const Shape& s = items.at(0).shape();
  Tensor<T> out(Shape{s.n() * static_cast<std::int64_t>(items.size()), s.c(), s.h(), s.w()});
  auto dst = out.values();
  std::size_t offset = 0;
  for (const auto& t : items) {
    if (t.shape() != s) {
      throw ShapeError("batch items differ: " + t.shape().str() + " vs " + s.str());
    }
    std::copy(t.values().begin(), t.values().end(), dst.begin() + offset);
    offset += t.values().size();
  }
  return out;
}

template <typename T>
Tensor<T> blend(const Tensor<T>& a, const Tensor<T>& b, double w) {
  require_same_shape(a, b, "mixup");
  Tensor<T> out(a.shape());
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    ov[i] = static_cast<T>(w * static_cast<double>(av[i]) + (1.0 - w) * static_cast<double>(bv[i]));
  }
  return out;
}

template <typename T>
StereoPair<T> map_pair(const StereoPair<T>& p, const auto& fn) {
  return StereoPair<T>{fn(p.left), fn(p.right)};
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

double sample_beta(double alpha, std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double x = gamma(rng);
  const double y = gamma(rng);
  return x + y > 0.0 ? x / (x + y) : 0.5;
}

void clip_gradients(ParamSet<float>& params, double max_norm) {
  if (max_norm <= 0.0) return;
  double total = 0.0;
  for (auto& [_, t] : params.all()) {
    if (!t.has_grad()) continue;
    for (float g : t.impl()->grad) total += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(total);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (auto& [_, t] : params.all()) {
    for (float& g : t.impl()->grad) g = static_cast<float>(g * scale);
  }
}

double window_mean(const std::vector<double>& v, bool from_end, int window) {
  if (v.empty()) throw UsageError("trace has no Charbonnier-phase rows");
  const std::size_t n = std::min<std::size_t>(v.size(), static_cast<std::size_t>(std::max(1, window)));
  const std::size_t first = from_end ? v.size() - n : 0;
  double total = 0.0;
  for (std::size_t i = first; i < first + n; ++i) total += v[i];
  return total / static_cast<double>(n);
}

template <typename Net, typename Batch, typename MakeBatch, typename Forward>
TrainResult run_loop(Net& net, const TrainConfig& tc, MakeBatch make_batch, Forward loss_of) {
  net.params().set_requires_grad(true);
  Optimizer opt(tc.optim);
  TrainTrace trace;
  std::optional<Batch> fixed;
  for (int it = 0; it < tc.iters; ++it) {
    const double lr = lr_at(it, tc.schedule);
    Batch batch = fixed ? *fixed : make_batch();
    if (tc.fixed_batch && !fixed) fixed = batch;
    const bool use_mse = tc.mse_from >= 0 && it >= tc.mse_from;
    Tape<float> tape;
    Tensor<float> loss;
    {
      TapeScope<float> scope(tape);
      loss = loss_of(batch, use_mse);
    }
    backward(loss, tape);
    tape.clear();
    clip_gradients(net.params(), tc.grad_clip);
    opt.step(net.params(), lr);
    net.params().zero_grad();
    trace.rows.push_back(TraceRow{it, lr, static_cast<double>(loss.item()), use_mse});
  }
  net.params().set_requires_grad(false);
  return TrainResult{net.params().to_store(), std::move(trace)};
}

}  // namespace

template <typename T>
Tensor<T> charbonnier_loss(const Tensor<T>& pred, const Tensor<T>& target, double eps) {
  require_same_shape(pred, target, "charbonnier_loss");
  if (!(eps > 0.0)) throw UsageError("charbonnier_loss: eps must be > 0");
  const Tensor<T> d2 = square(sub(pred, target));
  return mean_all(sqrt(add_scalar(d2, static_cast<T>(eps * eps))));
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred, target, "mse_loss");
  return mean_all(square(sub(pred, target)));
}

void OptimConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("optimizer betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("optimizer eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("optimizer weight_decay must be >= 0");
}

template <typename T>
void optimizer_step(std::span<T> param, std::span<const T> grad, AdamState& state,
                    const OptimConfig& cfg, double lr) {
  if (param.size() != grad.size()) throw UsageError("optimizer_step: param/grad size mismatch");
  if (state.m.empty()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    double p = static_cast<double>(param[i]);
    double g = static_cast<double>(grad[i]);
    if (cfg.kind == OptimKind::adamw) {
      p -= lr * cfg.weight_decay * p;
    } else {
      g += cfg.weight_decay * p;
    }
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    p -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    param[i] = static_cast<T>(p);
  }
}

Optimizer::Optimizer(OptimConfig cfg) : cfg_(cfg) { cfg_.validate(); }

template <typename T>
void Optimizer::step(ParamSet<T>& params, double lr) {
  for (auto& [name, t] : params.all()) {
    const Tensor<T> g = t.grad();
    optimizer_step<T>(t.values(), g.values(), state_[name], cfg_, lr);
  }
}

void LrSchedule::validate() const {
  if (!(init_lr >= 0.0)) throw ConfigError("schedule init_lr must be >= 0");
  for (std::size_t i = 1; i < milestones.size(); ++i) {
    if (milestones[i] <= milestones[i - 1]) {
      throw ConfigError("schedule milestones must be strictly increasing");
    }
  }
  if (kind == LrKind::cosine) {
    if (total_iters < 1) throw ConfigError("cosine schedule needs total_iters >= 1");
    if (!(min_lr >= 0.0 && min_lr <= init_lr)) {
      throw ConfigError("cosine schedule needs 0 <= min_lr <= init_lr");
    }
  }
}

double lr_at(std::int64_t iter, const LrSchedule& s) {
  if (iter < 0) throw UsageError("lr_at: iteration must be >= 0");
  if (s.kind == LrKind::multistep_half) {
    const auto passed = std::count_if(s.milestones.begin(), s.milestones.end(),
                                      [&](std::int64_t m) { return m <= iter; });
    return std::ldexp(s.init_lr, -static_cast<int>(passed));
  }
  if (iter == 0) return s.init_lr;
  if (iter >= s.total_iters) return s.min_lr;
  const double phase = std::numbers::pi * static_cast<double>(iter) /
                       static_cast<double>(s.total_iters);
  return s.min_lr + 0.5 * (s.init_lr - s.min_lr) * (1.0 + std::cos(phase));
}

AugmentDraw draw_augment(const AugmentConfig& cfg, int channels, std::mt19937_64& rng) {
  AugmentDraw d;
  if (cfg.mixup) d.mix = sample_beta(cfg.mixup_alpha, rng);
  if (cfg.channel_shuffle) {
    d.channel_perm.resize(static_cast<std::size_t>(channels));
    for (int c = 0; c < channels; ++c) d.channel_perm[static_cast<std::size_t>(c)] = c;
    for (int i = channels - 1; i > 0; --i) std::swap(d.channel_perm[i], d.channel_perm[uniform_int(rng, 0, i)]);
  }
  if (cfg.hflip) d.hflip = uniform_int(rng, 0, 1) == 1;
  if (cfg.vflip) d.vflip = uniform_int(rng, 0, 1) == 1;
  if (cfg.rotation) d.rot90 = uniform_int(rng, 0, 3);
  return d;
}

template <typename T>
Tensor<T> permute_channels(const Tensor<T>& x, const std::vector<int>& perm) {
  const Shape& s = x.shape();
  if (static_cast<std::int64_t>(perm.size()) != s.c()) {
    throw UsageError("permute_channels: permutation of " + std::to_string(perm.size()) +
                     " entries for " + s.str());
  }
  return gather(x, s, build_index(s, s, [&](auto n, auto c, auto h, auto w) {
                  return Pos{n, perm[static_cast<std::size_t>(c)], h, w};
                }));
}

template <typename T>
TrainSample<T> apply_augment(const TrainSample<T>& sample, const AugmentDraw& d,
                             const TrainSample<T>* partner) {
  NoTapeScope<T> no_tape;
  TrainSample<T> out = sample;
  if (partner != nullptr && d.mix != 1.0) {
    out.lr = StereoPair<T>{blend(out.lr.left, partner->lr.left, d.mix),
                           blend(out.lr.right, partner->lr.right, d.mix)};
    out.hr = StereoPair<T>{blend(out.hr.left, partner->hr.left, d.mix),
                           blend(out.hr.right, partner->hr.right, d.mix)};
  }
  if (!d.channel_perm.empty()) {
    auto perm = [&](const Tensor<T>& t) { return permute_channels(t, d.channel_perm); };
    out.lr = map_pair(out.lr, perm);
    out.hr = map_pair(out.hr, perm);
  }
  const GeomTransform g{d.hflip, d.vflip, d.rot90, d.hflip};
  if (!g.is_identity()) {
    out.lr = apply_geom(out.lr, g);
    out.hr = apply_geom(out.hr, g);
  }
  return out;
}

template <typename T>
TrainSample<T> augment(const TrainSample<T>& sample, const TrainSample<T>& partner,
                       const AugmentConfig& cfg, std::mt19937_64& rng) {
  const AugmentDraw d = draw_augment(cfg, static_cast<int>(sample.lr.shape().c()), rng);
  return apply_augment(sample, d, &partner);
}

std::vector<TrainSample<float>> make_toy_dataset(const ToyDataConfig& cfg) {
  if (cfg.pairs < 1 || cfg.scale < 1 || cfg.hr_height % cfg.scale != 0 ||
      cfg.hr_width % cfg.scale != 0 || cfg.hr_height < 1 || cfg.hr_width < 1 ||
      cfg.max_disparity < 0) {
    throw ConfigError("toy data: pairs >= 1 and HR dims divisible by the scale are required");
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };
  std::vector<TrainSample<float>> out;
  for (int i = 0; i < cfg.pairs; ++i) {
    const int d = uniform_int(rng, 0, cfg.max_disparity);
    const std::int64_t H = cfg.hr_height;
    const std::int64_t W = cfg.hr_width + d;
    std::vector<double> canvas(static_cast<std::size_t>(3 * H * W));
    double base[3];
    for (double& b : base) b = range(0.25, 0.75);
    for (int c = 0; c < 3; ++c) {
      for (std::int64_t k = 0; k < H * W; ++k) canvas[static_cast<std::size_t>(c * H * W + k)] = base[c];
    }
    for (int k = 0; k < 3; ++k) {
      const double fy = range(-0.3, 0.3);
      const double fx = range(-0.3, 0.3);
      const double phase = range(0.0, 6.283185307179586);
      double amp[3];
      for (double& a : amp) a = range(0.03, 0.12);
      for (int c = 0; c < 3; ++c) {
        for (std::int64_t y = 0; y < H; ++y) {
          for (std::int64_t x = 0; x < W; ++x) {
            canvas[static_cast<std::size_t>((c * H + y) * W + x)] +=
                amp[c] * std::sin(fy * static_cast<double>(y) + fx * static_cast<double>(x) + phase);
          }
        }
      }
    }
    for (int r = 0; r < 5; ++r) {
      const std::int64_t rh = uniform_int(rng, 4, static_cast<int>(std::max<std::int64_t>(4, H / 2)));
      const std::int64_t rw = uniform_int(rng, 4, static_cast<int>(std::max<std::int64_t>(4, W / 3)));
      const std::int64_t y0 = uniform_int(rng, 0, static_cast<int>(std::max<std::int64_t>(0, H - rh)));
      const std::int64_t x0 = uniform_int(rng, 0, static_cast<int>(std::max<std::int64_t>(0, W - rw)));
      double delta[3];
      for (double& v : delta) v = range(-0.3, 0.3);
      for (int c = 0; c < 3; ++c) {
        for (std::int64_t y = y0; y < std::min(H, y0 + rh); ++y) {
          for (std::int64_t x = x0; x < std::min(W, x0 + rw); ++x) {
            canvas[static_cast<std::size_t>((c * H + y) * W + x)] += delta[c];
          }
        }
      }
    }
    auto view = [&](std::int64_t offset) {
      Tensor<float> t(Shape{1, 3, H, cfg.hr_width});
      for (int c = 0; c < 3; ++c) {
        for (std::int64_t y = 0; y < H; ++y) {
          for (std::int64_t x = 0; x < cfg.hr_width; ++x) {
            t(0, c, y, x) = static_cast<float>(
                std::clamp(canvas[static_cast<std::size_t>((c * H + y) * W + x + offset)], 0.0, 1.0));
          }
        }
      }
      return t;
    };
    TrainSample<float> s;
    s.hr = StereoPair<float>{view(0), view(d)};
    s.lr = StereoPair<float>{bicubic_downsample(s.hr.left, cfg.scale),
                             bicubic_downsample(s.hr.right, cfg.scale)};
    out.push_back(std::move(s));
  }
  return out;
}

void TrainConfig::validate() const {
  if (iters < 0) throw ConfigError("train.iters must be >= 0");
  if (batch < 1) throw ConfigError("train.batch must be >= 1");
  if (crop_h < 1 || crop_w < 1) throw ConfigError("train crop dims must be >= 1");
  if (!(charbonnier_eps > 0.0)) throw ConfigError("train.charbonnier_eps must be > 0");
  if (!(grad_clip >= 0.0)) throw ConfigError("train.grad_clip must be >= 0");
  if (augment.mixup && !(augment.mixup_alpha > 0.0)) {
    throw ConfigError("augment.mixup_alpha must be > 0");
  }
  optim.validate();
  schedule.validate();
}

std::string TrainTrace::csv() const {
  std::ostringstream os;
  os << "iter,lr,loss\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", r.iter, r.lr, r.loss);
    os << buf;
  }
  return os.str();
}

double TrainTrace::smoothed_initial(int window) const {
  std::vector<double> v;
  for (const auto& r : rows) {
    if (!r.mse) v.push_back(r.loss);
  }
  return window_mean(v, false, window);
}

double TrainTrace::smoothed_final(int window) const {
  std::vector<double> v;
  for (const auto& r : rows) {
    if (!r.mse) v.push_back(r.loss);
  }
  return window_mean(v, true, window);
}

TrainResult train_stage1(const Stage1Config& cfg, const WeightStore& init,
                         const std::vector<TrainSample<float>>& data, const TrainConfig& tc) {
  tc.validate();
  if (data.empty()) throw ConfigError("stage-1 training needs at least one sample");
  Stage1Net<float> net = Stage1Net<float>::from_store(cfg, init);
  const int p = cfg.patch;
  const int s = cfg.scale;
  std::mt19937_64 rng(tc.seed);
  const int last = static_cast<int>(data.size()) - 1;

  struct Batch {
    Tensor<float> input, target;
  };
  auto make_batch = [&]() {
    std::vector<Tensor<float>> inputs, targets;
    for (int b = 0; b < tc.batch; ++b) {
      const int view = uniform_int(rng, 0, 1);
      auto mono = [&](const TrainSample<float>& t) {
        const Tensor<float>& lr = view == 0 ? t.lr.left : t.lr.right;
        const Tensor<float>& hr = view == 0 ? t.hr.left : t.hr.right;
        return TrainSample<float>{{lr, lr}, {hr, hr}};
      };
      const TrainSample<float> sample = mono(data[static_cast<std::size_t>(uniform_int(rng, 0, last))]);
      const TrainSample<float> partner = mono(data[static_cast<std::size_t>(uniform_int(rng, 0, last))]);
      const TrainSample<float> a = augment(sample, partner, tc.augment, rng);
      const Shape& ls = a.lr.shape();
      if (ls.h() < p || ls.w() < p) {
        throw ConfigError("stage-1 patch " + std::to_string(p) + " exceeds LR image " + ls.str());
      }
      const int y = uniform_int(rng, 0, static_cast<int>(ls.h() - p));
      const int x = uniform_int(rng, 0, static_cast<int>(ls.w() - p));
      inputs.push_back(multi_patch_assemble(a.lr.left, y, x, p));
      targets.push_back(crop(a.hr.left, std::int64_t{y} * s, std::int64_t{x} * s,
                             std::int64_t{p} * s, std::int64_t{p} * s));
    }
    return Batch{stack_batch(inputs), stack_batch(targets)};
  };
  auto loss_of = [&](const Batch& b, bool use_mse) {
    const Tensor<float> pred = net.forward(b.input);
    return use_mse ? mse_loss(pred, b.target) : charbonnier_loss(pred, b.target, tc.charbonnier_eps);
  };
  return run_loop<Stage1Net<float>, Batch>(net, tc, make_batch, loss_of);
}

TrainResult train_stereo(const Stage2Config& cfg, const WeightStore& init,
                         const std::vector<StereoPair<float>>& inputs,
                         const std::vector<StereoPair<float>>& targets, const TrainConfig& tc,
                         const std::string& prefix) {
  tc.validate();
  if (inputs.empty() || inputs.size() != targets.size()) {
    throw ConfigError("stereo training needs matching, non-empty input and target lists");
  }
  if (tc.augment.rotation) {
    throw ConfigError("rotation augmentation would break scanline geometry in stereo training");
  }
  Stage2Net<float> net = Stage2Net<float>::from_store(cfg, init, prefix);
  std::mt19937_64 rng(tc.seed);
  const int last = static_cast<int>(inputs.size()) - 1;

  struct Batch {
    StereoPair<float> input, target;
  };
  auto make_batch = [&]() {
    std::vector<Tensor<float>> il, ir, tl, tr;
    for (int b = 0; b < tc.batch; ++b) {
      const auto i = static_cast<std::size_t>(uniform_int(rng, 0, last));
      const auto j = static_cast<std::size_t>(uniform_int(rng, 0, last));
      const TrainSample<float> a = augment(TrainSample<float>{inputs[i], targets[i]},
                                           TrainSample<float>{inputs[j], targets[j]}, tc.augment, rng);
      const Shape& s = a.hr.shape();
      if (a.lr.shape() != s) throw ShapeError("stereo training: input and target dims differ");
      const std::int64_t ch = std::min<std::int64_t>(tc.crop_h, s.h());
      const std::int64_t cw = std::min<std::int64_t>(tc.crop_w, s.w());
      const int y = uniform_int(rng, 0, static_cast<int>(s.h() - ch));
      const int x = uniform_int(rng, 0, static_cast<int>(s.w() - cw));
      il.push_back(crop(a.lr.left, y, x, ch, cw));
      ir.push_back(crop(a.lr.right, y, x, ch, cw));
      tl.push_back(crop(a.hr.left, y, x, ch, cw));
      tr.push_back(crop(a.hr.right, y, x, ch, cw));
    }
    return Batch{{stack_batch(il), stack_batch(ir)}, {stack_batch(tl), stack_batch(tr)}};
  };
  auto loss_of = [&](const Batch& b, bool use_mse) {
    const StereoPair<float> pred = net.forward(b.input);
    auto one = [&](const Tensor<float>& p, const Tensor<float>& t) {
      return use_mse ? mse_loss(p, t) : charbonnier_loss(p, t, tc.charbonnier_eps);
    };
    return mul_scalar(add(one(pred.left, b.target.left), one(pred.right, b.target.right)), 0.5f);
  };
  return run_loop<Stage2Net<float>, Batch>(net, tc, make_batch, loss_of);
}

TrainResult train_toy(int stage, const ToySetup& setup, const TrainConfig& tc) {
  tc.validate();
  if (stage < 1 || stage > 3) throw UsageError("train-toy: stage must be 1, 2 or 3");
  const std::vector<TrainSample<float>> data = make_toy_dataset(tc.data);
  if (setup.stage1.scale != tc.data.scale) {
    throw ConfigError("train-toy: stage-1 scale " + std::to_string(setup.stage1.scale) +
                      " differs from the data scale " + std::to_string(tc.data.scale));
  }
  if (stage == 1) {
    const WeightStore init =
        setup.init ? *setup.init : init_weights(stage1_param_specs(setup.stage1), tc.seed);
    return train_stage1(setup.stage1, init, data, tc);
  }

  if (!setup.stage1_weights) throw ConfigError("train-toy: stage " + std::to_string(stage) +
                                               " needs stage-1 weights");
  const Stage1Net<float> s1 = Stage1Net<float>::from_store(setup.stage1, *setup.stage1_weights);
  const ImageFn<float> sr = [&](const Tensor<float>& x) { return stage1_superresolve_image(x, s1); };
  auto upscale = [&](const Tensor<float>& x) {
    return tc.self_ensemble_inputs ? self_ensemble_mono(sr, x) : sr(x);
  };
  std::vector<StereoPair<float>> inputs, targets;
  for (const auto& s : data) {
    inputs.push_back(StereoPair<float>{upscale(s.lr.left), upscale(s.lr.right)});
    targets.push_back(s.hr);
  }

  if (stage == 2) {
    const WeightStore init =
        setup.init ? *setup.init : init_weights(stage2_param_specs(setup.stage2, "stage2"), tc.seed);
    return train_stereo(setup.stage2, init, inputs, targets, tc, "stage2");
  }

  if (!setup.stage2_weights) throw ConfigError("train-toy: stage 3 needs stage-2 weights");
  const Stage2Net<float> s2 = Stage2Net<float>::from_store(setup.stage2, *setup.stage2_weights);
  const PairFn<float> enhance = [&](const StereoPair<float>& p) { return s2.forward(p); };
  for (auto& in : inputs) {
    in = tc.self_ensemble_inputs ? self_ensemble_stereo(enhance, in) : enhance(in);
  }
  const WeightStore init =
      setup.init ? *setup.init : setup.stage2_weights->renamed_prefix("stage2.", "stage3.");
  return train_stereo(setup.stage2, init, inputs, targets, tc, "stage3");
}

#define HTCAN_INSTANTIATE(T)                                                                 \
  template Tensor<T> charbonnier_loss(const Tensor<T>&, const Tensor<T>&, double);           \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);                           \
  template void optimizer_step(std::span<T>, std::span<const T>, AdamState&,                 \
                               const OptimConfig&, double);                                  \
  template void Optimizer::step(ParamSet<T>&, double);                                       \
  template TrainSample<T> apply_augment(const TrainSample<T>&, const AugmentDraw&,           \
                                        const TrainSample<T>*);                              \
  template TrainSample<T> augment(const TrainSample<T>&, const TrainSample<T>&,              \
                                  const AugmentConfig&, std::mt19937_64&);                   \
  template Tensor<T> permute_channels(const Tensor<T>&, const std::vector<int>&);

HTCAN_INSTANTIATE(float)
HTCAN_INSTANTIATE(double)

#undef HTCAN_INSTANTIATE

}  // namespace htcan
