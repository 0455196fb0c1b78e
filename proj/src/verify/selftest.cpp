#include "htcan/verify/selftest.hpp"

#include <cstdio>
#include <random>
#include <sstream>

#include "htcan/metrics.hpp"
#include "htcan/verify/oracles.hpp"

namespace htcan::verify {

namespace {

using D = Tensor<double>;

D random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> ud(lo, hi);
  D t(s);
  for (double& v : t.values()) v = ud(rng);
  return t;
}

void add_check(std::vector<SelftestCheck>& out, std::string name, double err, double tol) {
  out.push_back({std::move(name), err, tol, err <= tol});
}

AttentionWeights<double> random_attention(std::int64_t c, std::mt19937_64& rng) {
  auto w = [&] { return random_tensor({c, c, 1, 1}, rng, -0.5, 0.5); };
  auto b = [&] { return random_tensor({1, c, 1, 1}, rng, -0.2, 0.2); };
  return {w(), b(), w(), b(), w(), b(), w(), b()};
}

}  // namespace

std::vector<SelftestCheck> run_selftest(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<SelftestCheck> out;

  {
    const D x = random_tensor({2, 4, 7, 6}, rng);
    const D w = random_tensor({6, 2, 3, 3}, rng);
    const D b = random_tensor({1, 6, 1, 1}, rng);
    add_check(out, "conv2d grouped pad 1",
              max_abs_diff(conv2d(x, w, b, 1, 1, 2), conv2d_oracle(x, w, b, 1, 1, 2)), 1e-12);
    const D w2 = random_tensor({3, 4, 3, 3}, rng);
    add_check(out, "conv2d stride 2",
              max_abs_diff(conv2d(x, w2, D(), 2, 0, 1), conv2d_oracle(x, w2, D(), 2, 0, 1)), 1e-12);
  }
  {
    const D a = random_tensor({2, 3, 4, 5}, rng);
    const D b = random_tensor({2, 3, 5, 6}, rng);
    add_check(out, "matmul_batched", max_abs_diff(matmul_batched(a, b), matmul_oracle(a, b)), 1e-12);
  }
  {
    const int heads = 2, ws = 4;
    const D tokens = random_tensor({3, 1, ws * ws, 8}, rng);
    const auto w = random_attention(8, rng);
    const D bias = random_tensor({1, heads, ws * ws, ws * ws}, rng);
    add_check(out, "window attention",
              max_abs_diff(window_attention(tokens, w, heads, bias),
                           attention_oracle(tokens, w, heads, bias)),
              1e-12);
  }
  {
    const D fl = random_tensor({2, 6, 3, 7}, rng);
    const D fr = random_tensor({2, 6, 3, 7}, rng);
    auto m = [&] { return random_tensor({6, 6, 1, 1}, rng, -0.5, 0.5); };
    auto v = [&] { return random_tensor({1, 6, 1, 1}, rng, -0.5, 0.5); };
    ScamWeights<double> w{v(), v(), v(), v(), m(), v(), m(), v(), m(), v(), m(), v(), v(), v()};
    const StereoPair<double> got = scam_forward(fl, fr, w, 1e-6);
    const StereoPair<double> want = scam_oracle(fl, fr, w, 1e-6);
    add_check(out, "scam", std::max(max_abs_diff(got.left, want.left), max_abs_diff(got.right, want.right)),
              1e-12);
  }
  {
    const D a = random_tensor({1, 3, 17, 23}, rng, 0.0, 1.0);
    D b = a.clone();
    std::normal_distribution<double> noise(0.0, 0.05);
    for (double& x : b.values()) x += noise(rng);
    add_check(out, "ssim luma", std::abs(ssim(a, b) - ssim_oracle(a, b)), 1e-12);
    add_check(out, "ssim identical", std::abs(ssim(a, a) - 1.0), 1e-12);
  }
  for (OptimKind kind : {OptimKind::adam, OptimKind::adamw}) {
    OptimConfig cfg;
    cfg.kind = kind;
    cfg.weight_decay = 0.01;
    std::vector<double> p = {0.5, -1.0, 2.0, 0.0};
    const std::vector<std::vector<double>> grads = {
        {0.1, -0.2, 0.3, 0.0}, {-0.4, 0.5, 0.1, 1.0}, {0.2, 0.2, -0.2, -1.0}};
    const std::vector<double> want = adam_oracle(p, grads, cfg, 1e-2);
    AdamState state;
    for (const auto& g : grads) optimizer_step<double>(p, g, state, cfg, 1e-2);
    double err = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) err = std::max(err, std::abs(p[i] - want[i]));
    add_check(out, kind == OptimKind::adam ? "adam 3 steps" : "adamw 3 steps", err, 1e-14);
  }
  {
    const D x = random_tensor({1, 2, 3, 4}, rng);
    add_check(out, "reflect pad (folding)",
              max_abs_diff(reflect_pad2d_folded(x, Pad2d{7, 5, 4, 6}), reflect_pad_oracle(x, 7, 5, 4, 6)),
              0.0);
  }
  {
    const D img = random_tensor({1, 3, 13, 11}, rng);
    double err = 0.0;
    for (auto [y, x] : {std::pair<int, int>{0, 0}, {5, 3}, {9, 7}, {2, 7}}) {
      err = std::max(err, max_abs_diff(multi_patch_assemble(img, y, x, 4), multi_patch_oracle(img, y, x, 4)));
    }
    add_check(out, "multi-patch assembly", err, 0.0);
  }
  return out;
}

std::string format_selftest_table(const std::vector<SelftestCheck>& checks) {
  std::ostringstream os;
  char line[256];
  for (const auto& c : checks) {
    std::snprintf(line, sizeof line, "%-24s err %.3e tol %.1e  %s\n", c.name.c_str(), c.error,
                  c.tolerance, c.pass ? "PASS" : "FAIL");
    os << line;
  }
  return os.str();
}

}  // namespace htcan::verify
