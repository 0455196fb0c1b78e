#include "htcan/verify/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "htcan/ops.hpp"
#include "htcan/pixel_ops.hpp"
#include "htcan/stage1.hpp"
#include "htcan/stage2.hpp"
#include "htcan/training.hpp"

namespace htcan::verify {

namespace {

using D = Tensor<double>;

double eval(const std::function<D()>& loss) {
  NoTapeScope<double> off;
  return loss().item();
}

std::vector<std::int64_t> pick_entries(std::int64_t n, std::int64_t max_entries,
                                       std::mt19937_64& rng) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  if (max_entries > 0 && n > max_entries) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(max_entries));
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

class Rand {
 public:
  explicit Rand(std::uint64_t seed) : rng_(seed) {}

  D normal(Shape s, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    D t(s);
    for (double& v : t.values()) v = nd(rng_);
    return t;
  }
  D uniform(Shape s, double lo, double hi) {
    std::uniform_real_distribution<double> ud(lo, hi);
    D t(s);
    for (double& v : t.values()) v = ud(rng_);
    return t;
  }
  // Magnitudes in [lo, hi] with random sign, away from kinks at 0.
  D signed_away(Shape s, double lo, double hi) {
    D t = uniform(s, lo, hi);
    std::bernoulli_distribution coin(0.5);
    for (double& v : t.values()) {
      if (coin(rng_)) v = -v;
    }
    return t;
  }

 private:
  std::mt19937_64 rng_;
};

// sum(out * r) with a fixed random r, so every output element matters
// with a distinct weight.
D project(const D& out, std::uint64_t seed) {
  Rand r(seed ^ 0x9e3779b97f4a7c15ULL);
  return sum_all(mul(out, r.normal(out.shape())));
}

std::vector<NamedInput> net_inputs(ParamSet<double>& params) {
  std::vector<NamedInput> inputs;
  for (auto& [name, t] : params.all()) inputs.push_back({name, t});
  return inputs;
}

}  // namespace

GradcheckResult gradcheck(const std::string& name, const std::vector<NamedInput>& inputs,
                          const std::function<D()>& loss, const GradcheckOptions& opts) {
  for (const auto& in : inputs) {
    D t = in.tensor;
    t.zero_grad();
    t.set_requires_grad(true);
  }
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    const D l = loss();
    backward(l, tape);
  }

  GradcheckResult result;
  result.name = name;
  std::mt19937_64 rng(opts.seed);
  for (const auto& in : inputs) {
    D t = in.tensor;
    const D analytic = t.grad();
    auto values = t.values();
    const auto entries = pick_entries(t.numel(), opts.max_entries, rng);
    double max_a = 0.0, max_n = 0.0, max_diff = 0.0;
    for (std::int64_t i : entries) {
      const double orig = values[static_cast<std::size_t>(i)];
      values[static_cast<std::size_t>(i)] = orig + opts.step;
      const double up = eval(loss);
      values[static_cast<std::size_t>(i)] = orig - opts.step;
      const double down = eval(loss);
      values[static_cast<std::size_t>(i)] = orig;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double a = analytic.values()[static_cast<std::size_t>(i)];
      max_a = std::max(max_a, std::abs(a));
      max_n = std::max(max_n, std::abs(numeric));
      max_diff = std::max(max_diff, std::abs(a - numeric));
    }
    result.entries += static_cast<std::int64_t>(entries.size());
    const double rel = max_diff / std::max({max_a, max_n, opts.floor});
    if (result.worst.empty() || !(rel <= result.max_rel_error)) {
      result.max_rel_error = std::isnan(rel) ? INFINITY : rel;
      result.worst = in.name;
    }
    t.set_requires_grad(false);
    t.zero_grad();
  }
  result.pass = result.max_rel_error < opts.tolerance;
  return result;
}

std::vector<GradcheckResult> gradcheck_suite(std::uint64_t seed, const GradcheckOptions& opts) {
  std::vector<GradcheckResult> out;
  Rand r(seed);
  std::uint64_t k = seed * 1000;
  GradcheckOptions op_opts = opts;
  op_opts.tolerance = std::min(opts.tolerance, opts.op_tolerance);
  auto check = [&](const std::string& name, std::vector<NamedInput> inputs,
                   std::function<D()> f) {
    out.push_back(gradcheck(name, inputs, f, op_opts));
  };
  auto check_net = [&](const std::string& name, std::vector<NamedInput> inputs,
                       std::function<D()> f) {
    out.push_back(gradcheck(name, inputs, f, opts));
  };
  auto unary = [&](const std::string& name, D x, std::function<D(const D&)> f) {
    const std::uint64_t s = ++k;
    check(name, {{"x", x}}, [=] { return project(f(x), s); });
  };

  {
    D x = r.normal({2, 4, 5, 6});
    D w = r.normal({6, 2, 3, 3}, 0.3);
    D b = r.normal({1, 6, 1, 1});
    const std::uint64_t s = ++k;
    check("conv2d_grouped", {{"input", x}, {"weight", w}, {"bias", b}},
          [=] { return project(conv2d(x, w, b, 1, 1, 2), s); });
  }
  {
    D x = r.normal({1, 3, 7, 6});
    D w = r.normal({4, 3, 3, 3}, 0.3);
    D b = r.normal({1, 4, 1, 1});
    const std::uint64_t s = ++k;
    check("conv2d_strided", {{"input", x}, {"weight", w}, {"bias", b}},
          [=] { return project(conv2d(x, w, b, 2, 0, 1), s); });
  }
  {
    D a = r.normal({2, 2, 3, 4});
    D b = r.normal({2, 2, 4, 5});
    const std::uint64_t s = ++k;
    check("matmul_batched", {{"a", a}, {"b", b}}, [=] { return project(matmul_batched(a, b), s); });
  }
  {
    D x = r.normal({1, 2, 5, 4});
    D w = r.normal({3, 4, 1, 1});
    D b = r.normal({1, 3, 1, 1});
    const std::uint64_t s = ++k;
    check("linear", {{"x", x}, {"weight", w}, {"bias", b}},
          [=] { return project(linear(x, w, b), s); });
  }
  unary("softmax_lastdim", r.normal({2, 2, 3, 5}, 2.0), [](const D& x) { return softmax_lastdim(x); });
  {
    D x = r.normal({2, 5, 3, 3});
    D g = r.normal({1, 5, 1, 1});
    D b = r.normal({1, 5, 1, 1});
    const std::uint64_t s = ++k;
    check("layer_norm", {{"x", x}, {"gamma", g}, {"beta", b}},
          [=] { return project(layer_norm(x, g, b, 1e-6), s); });
  }
  unary("gelu", r.normal({1, 3, 4, 4}, 2.0), [](const D& x) { return activation(x, Activation::gelu); });
  unary("silu", r.normal({1, 3, 4, 4}, 2.0), [](const D& x) { return activation(x, Activation::silu); });
  unary("sigmoid", r.normal({1, 3, 4, 4}, 2.0), [](const D& x) { return sigmoid(x); });
  unary("relu", r.signed_away({1, 3, 4, 4}, 0.1, 2.0), [](const D& x) { return relu(x); });
  unary("square", r.normal({1, 3, 4, 4}), [](const D& x) { return square(x); });
  unary("sqrt", r.uniform({1, 3, 4, 4}, 0.5, 2.0), [](const D& x) { return sqrt(x); });
  {
    D a = r.normal({2, 3, 4, 5});
    D b = r.normal({1, 3, 1, 5});
    const std::uint64_t s1 = ++k, s2 = ++k, s3 = ++k;
    check("add_broadcast", {{"a", a}, {"b", b}}, [=] { return project(add(a, b), s1); });
    check("sub_broadcast", {{"a", a}, {"b", b}}, [=] { return project(sub(a, b), s2); });
    check("mul_broadcast", {{"a", a}, {"b", b}}, [=] { return project(mul(a, b), s3); });
  }
  unary("scalar_affine", r.normal({1, 2, 3, 3}),
        [](const D& x) { return add_scalar(mul_scalar(x, 1.7), -0.3); });
  unary("mean_all", r.normal({2, 2, 3, 3}), [](const D& x) { return mul(mean_all(x), mean_all(x)); });
  unary("global_avg_pool", r.normal({2, 3, 4, 5}), [](const D& x) { return global_avg_pool(x); });
  unary("reshape", r.normal({2, 3, 4, 5}), [](const D& x) { return reshape(x, Shape{6, 1, 20, 1}); });
  unary("slice_channels", r.normal({2, 5, 3, 3}), [](const D& x) { return slice_channels(x, 1, 3); });
  unary("transpose_last2", r.normal({2, 2, 3, 5}), [](const D& x) { return transpose_last2(x); });
  unary("crop", r.normal({1, 2, 6, 7}), [](const D& x) { return crop(x, 1, 2, 4, 3); });
  unary("roll", r.normal({1, 2, 5, 6}), [](const D& x) { return roll(x, -2, 3); });
  unary("reflect_pad_folded", r.normal({1, 2, 3, 4}),
        [](const D& x) { return reflect_pad2d_folded(x, Pad2d{5, 2, 4, 1}); });
  unary("pixel_shuffle", r.normal({1, 8, 3, 2}), [](const D& x) { return pixel_shuffle(x, 2); });
  unary("pixel_unshuffle", r.normal({1, 2, 4, 6}), [](const D& x) { return pixel_unshuffle(x, 2); });
  unary("window_partition", r.normal({2, 3, 4, 6}),
        [](const D& x) { return window_partition(x, 2).tokens; });
  unary("window_reverse", r.normal({12, 1, 4, 3}), [](const D& t) {
    return window_reverse(t, 2, 3, 2, Shape{2, 3, 4, 6});
  });
  unary("apply_geom", r.normal({1, 2, 3, 5}), [](const D& x) {
    return apply_geom(x, GeomTransform{true, true, 1, false});
  });
  unary("multi_patch_assemble", r.normal({2, 3, 5, 6}),
        [](const D& x) { return multi_patch_assemble(x, 1, 2, 3); });
  {
    D q = r.normal({2, 1, 4, 6});
    D kk = r.normal({2, 1, 5, 6});
    D v = r.normal({2, 1, 5, 6});
    D bias = r.normal({1, 2, 4, 5});
    D mask = r.normal({2, 1, 4, 5});
    const std::uint64_t s = ++k;
    check("attention_core", {{"q", q}, {"k", kk}, {"v", v}, {"bias", bias}},
          [=] { return project(attention_core(q, kk, v, 2, bias, mask), s); });
  }
  unary("simple_gate", r.normal({1, 6, 3, 3}), [](const D& x) { return simple_gate(x); });
  {
    D pred = r.normal({1, 2, 3, 3});
    D target = r.normal({1, 2, 3, 3});
    check("charbonnier_mse_loss", {{"pred", pred}},
          [=] { return add(charbonnier_loss(pred, target, 1e-3), mse_loss(pred, target)); });
  }

  // Networks: tiny configurations, randomized weights so every branch
  // carries gradient.
  {
    const Stage1Config cfg = Stage1Config::tiny();
    const auto specs = stage1_param_specs(cfg);
    auto net = Stage1Net<double>(cfg, ParamSet<double>::from_store(
                                          init_weights(specs, seed + 11, InitMode::random), specs));
    D in = r.uniform({1, 9 * cfg.image_channels, cfg.patch, cfg.patch}, 0.0, 1.0);
    D target = r.uniform({1, cfg.image_channels, cfg.patch * cfg.scale, cfg.patch * cfg.scale}, 0.0, 1.0);
    auto inputs = net_inputs(net.params());
    inputs.push_back({"input", in});
    check_net("stage1_tiny", inputs, [=] { return mse_loss(net.forward(in), target); });
  }
  {
    const Stage2Config cfg = Stage2Config::tiny();
    const auto specs = stage2_param_specs(cfg);
    auto net = Stage2Net<double>(cfg, ParamSet<double>::from_store(
                                          init_weights(specs, seed + 13, InitMode::random), specs));
    D l = r.uniform({1, cfg.image_channels, 6, 10}, 0.0, 1.0);
    D rr = r.uniform({1, cfg.image_channels, 6, 10}, 0.0, 1.0);
    D tl = r.uniform(l.shape(), 0.0, 1.0);
    D tr = r.uniform(l.shape(), 0.0, 1.0);
    auto inputs = net_inputs(net.params());
    inputs.push_back({"left", l});
    inputs.push_back({"right", rr});
    check_net("stage2_tiny", inputs, [=] {
      const StereoPair<double> o = net.forward(StereoPair<double>{l, rr});
      return add(mse_loss(o.left, tl), mse_loss(o.right, tr));
    });
  }
  return out;
}

std::string format_gradcheck_table(const std::vector<GradcheckResult>& results) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-28s %12s %8s  %-6s %s\n", "check", "max_rel_err", "entries",
                "status", "worst");
  os << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-28s %12.3e %8lld  %-6s %s\n", r.name.c_str(),
                  r.max_rel_error, static_cast<long long>(r.entries), r.pass ? "PASS" : "FAIL",
                  r.worst.c_str());
    os << line;
  }
  return os.str();
}

}  // namespace htcan::verify
