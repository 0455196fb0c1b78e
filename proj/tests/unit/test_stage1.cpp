#include "doctest.h"
#include "helpers.hpp"
#include "htcan/stage1.hpp"
#include "htcan/verify/oracles.hpp"

using namespace htcan;

namespace {

Stage1Net<double> tiny_net(std::uint64_t seed, InitMode mode = InitMode::random,
                           Stage1Config cfg = Stage1Config::tiny()) {
  return Stage1Net<double>::from_store(cfg, init_weights(stage1_param_specs(cfg), seed, mode));
}

AttentionWeights<double> random_attention(int c, std::mt19937_64& rng) {
  auto w = [&] { return test::random_tensor(Shape{c, c, 1, 1}, rng); };
  auto b = [&] { return test::random_tensor(Shape{1, c, 1, 1}, rng); };
  return AttentionWeights<double>{w(), b(), w(), b(), w(), b(), w(), b()};
}

Tensor<double> conv(const Stage1Net<double>& net, const std::string& name, const Tensor<double>& x,
                    int pad) {
  return conv2d(x, net.params().get(name + ".weight"), net.params().get(name + ".bias"), 1, pad);
}

Tensor<double> norm(const Stage1Net<double>& net, const std::string& name, const Tensor<double>& x) {
  return layer_norm(x, net.params().get(name + ".weight"), net.params().get(name + ".bias"),
                    net.config().norm_eps);
}

}  // namespace

TEST_SUITE("stage1") {

TEST_CASE("config validation") {
  Stage1Config c = Stage1Config::tiny();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = Stage1Config::tiny();
  c.window = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = Stage1Config::tiny();
  c.scale = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(Stage1Config{}.validate());
}

TEST_CASE("single-token and symmetric attention") {
  std::mt19937_64 rng(1);
  const AttentionWeights<double> w = random_attention(4, rng);
  const Tensor<double> tok = test::random_tensor(Shape{1, 1, 1, 4}, rng);
  const Tensor<double> v = linear(linear(tok, w.v_w, w.v_b), w.proj_w, w.proj_b);
  CHECK(test::max_diff(window_attention(tok, w, 2, Tensor<double>()), v) < 1e-15);

  const Tensor<double> two(Shape{1, 1, 2, 4}, std::vector<double>{.1, .2, .3, .4, .1, .2, .3, .4});
  const Tensor<double> q = linear(two, w.q_w, w.q_b);
  const Tensor<double> k = linear(two, w.k_w, w.k_b);
  const Tensor<double> a = attention_core(q, k, linear(two, w.v_w, w.v_b), 1, Tensor<double>(),
                                          Tensor<double>());
  const Tensor<double> vv = linear(two, w.v_w, w.v_b);
  CHECK(test::max_diff(a, vv) < 1e-15);  // rows [0.5, 0.5] over identical values
}

TEST_CASE("window attention matches the brute-force oracle") {
  std::mt19937_64 rng(2);
  const AttentionWeights<double> w = random_attention(4, rng);
  const Tensor<double> tok = test::random_tensor(Shape{3, 1, 3, 4}, rng);
  const Tensor<double> bias = test::random_tensor(Shape{1, 2, 3, 3}, rng);
  CHECK(test::max_diff(window_attention(tok, w, 2, bias), verify::attention_oracle(tok, w, 2, bias)) <
        1e-12);
  CHECK_THROWS(window_attention(tok, w, 3, Tensor<double>()));
}

TEST_CASE("forward output shape and zero head") {
  const Stage1Net<double> net = tiny_net(3);
  const Tensor<double> x = test::random_tensor(Shape{2, 27, 8, 8}, 4, 0, 1);
  CHECK(net.forward(x).shape() == Shape{2, 3, 32, 32});
  const Tensor<double> odd = test::random_tensor(Shape{1, 27, 6, 7}, 4, 0, 1);
  CHECK(net.forward(odd).shape() == Shape{1, 3, 24, 28});
  CHECK_THROWS_AS(net.forward(Tensor<double>(Shape{1, 9, 8, 8})), ShapeError);

  Stage1Net<double> zero = tiny_net(3);
  for (auto& v : zero.params().get("stage1.conv_last.weight").values()) v = 0;
  for (auto& v : zero.params().get("stage1.conv_last.bias").values()) v = 0;
  for (double v : test::vals(zero.forward(x))) CHECK(v == 0.0);
}

TEST_CASE("residual groups are identities at standard initialization") {
  Stage1Config cfg = Stage1Config::tiny();
  cfg.groups = 2;
  cfg.blocks_per_group = 2;
  const Stage1Net<double> net = tiny_net(5, InitMode::standard, cfg);
  const Tensor<double> f = test::random_tensor(Shape{1, 8, 8, 8}, 6);
  CHECK(test::bit_equal(net.trunk(f), f));
  CHECK(test::bit_equal(net.rhag(f, 1), f));
  CHECK(test::bit_equal(net.hab(f, 0, 1), f));
  CHECK(test::bit_equal(net.ocab(f, 0), f));
}

TEST_CASE("forward equals a hand composition of its sub-operations") {
  const Stage1Net<double> net = tiny_net(7);
  const Stage1Config& cfg = net.config();
  const Tensor<double> x = test::random_tensor(Shape{1, 27, 8, 8}, 8, 0, 1);

  const Tensor<double> f0 = conv(net, "stage1.conv_first", x, 1);
  // one hybrid block, unshifted because the map is no larger than two windows
  const std::string b = "stage1.g0.b0";
  const Tensor<double> xn = norm(net, b + ".norm1", f0);
  const Windows<double> win = window_partition(xn, cfg.window);
  Tensor<double> a = window_attention(win.tokens, net.attention_weights(b + ".attn"), cfg.heads,
                                      net.relative_bias(b + ".attn.rel_bias", cfg.window));
  a = window_reverse(a, win.rows, win.cols, cfg.window, f0.shape());
  const Tensor<double> y =
      add(add(f0, a), mul(net.cab(xn, b + ".cab"), net.params().get(b + ".cab.scale")));
  const Tensor<double> h = add(y, net.mlp(norm(net, b + ".norm2", y), b + ".mlp"));
  CHECK(test::bit_equal(net.hab(f0, 0, 0), h));
  const Tensor<double> g = add(f0, conv(net, "stage1.g0.conv", net.ocab(h, 0), 1));
  CHECK(test::bit_equal(net.trunk(f0), g));

  const Tensor<double> t = add(conv(net, "stage1.conv_after_body", norm(net, "stage1.norm", g), 1), f0);
  Tensor<double> r = activation(conv(net, "stage1.recon.conv_before", t, 1), cfg.activation);
  r = pixel_shuffle(conv(net, "stage1.recon.up0", r, 1), 2);
  r = pixel_shuffle(conv(net, "stage1.recon.up1", r, 1), 2);
  r = conv(net, "stage1.conv_last", r, 1);
  CHECK(test::bit_equal(net.forward(x), r));
}

TEST_CASE("activation swap changes values but not shapes") {
  Stage1Config silu = Stage1Config::tiny();
  silu.activation = Activation::silu;
  const WeightStore w = init_weights(stage1_param_specs(silu), 9, InitMode::random);
  const Tensor<double> x = test::random_tensor(Shape{1, 27, 8, 8}, 10, 0, 1);
  const Tensor<double> a = Stage1Net<double>::from_store(Stage1Config::tiny(), w).forward(x);
  const Tensor<double> s = Stage1Net<double>::from_store(silu, w).forward(x);
  CHECK(a.shape() == s.shape());
  CHECK(test::max_diff(a, s) > 1e-6);
}

TEST_CASE("scale 3 and non-square windows of the overlapping block") {
  Stage1Config cfg = Stage1Config::tiny();
  cfg.scale = 3;
  cfg.overlap_ratio = 0.25;
  const Stage1Net<double> net = tiny_net(11, InitMode::random, cfg);
  CHECK(net.forward(test::random_tensor(Shape{1, 27, 8, 8}, 12)).shape() == Shape{1, 3, 24, 24});
}

TEST_CASE("missing parameters are named") {
  WeightStore w = init_weights(stage1_param_specs(Stage1Config::tiny()), 1);
  w = w.without_prefix("stage1.conv_last");
  CHECK_THROWS_WITH_AS(Stage1Net<double>::from_store(Stage1Config::tiny(), w),
                       doctest::Contains("stage1.conv_last"), LoadError);
}

TEST_CASE("tiled whole-image inference") {
  CHECK(tile_starts(16, 8) == std::vector<std::int64_t>{0, 8});
  CHECK(tile_starts(19, 8) == std::vector<std::int64_t>{0, 8, 11});
  CHECK(tile_starts(5, 8) == std::vector<std::int64_t>{0});

  const Stage1Net<double> net = tiny_net(13);
  const Tensor<double> one = test::random_tensor(Shape{1, 3, 8, 8}, 14, 0, 1);
  CHECK(test::max_diff(stage1_superresolve_image(one, net),
                       net.forward(multi_patch_assemble(one, 0, 0, 8))) < 1e-12);

  const Tensor<double> img = test::random_tensor(Shape{1, 3, 16, 24}, 15, 0, 1);
  CHECK(stage1_superresolve_image(img, net).shape() == Shape{1, 3, 64, 96});
  const Tensor<double> odd = test::random_tensor(Shape{1, 3, 11, 19}, 16, 0, 1);
  CHECK(stage1_superresolve_image(odd, net, TilingConfig{8, 2}).shape() == Shape{1, 3, 44, 76});
  CHECK(test::bit_equal(stage1_superresolve_image(odd, net, TilingConfig{8, 1}),
                        stage1_superresolve_image(odd, net, TilingConfig{8, 5})));

  Stage1Net<double> flat = tiny_net(13);
  for (auto& v : flat.params().get("stage1.conv_last.weight").values()) v = 0;
  for (auto& v : flat.params().get("stage1.conv_last.bias").values()) v = 0.3;
  for (double v : test::vals(stage1_superresolve_image(odd, flat))) CHECK(v == doctest::Approx(0.3).epsilon(1e-14));
}

}  // TEST_SUITE
