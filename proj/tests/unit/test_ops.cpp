#include <cmath>
#include <numbers>

#include "doctest.h"
#include "helpers.hpp"
#include "htcan/ops.hpp"
#include "htcan/verify/oracles.hpp"

using namespace htcan;

namespace {

Tensor<double> row(std::vector<double> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return Tensor<double>(Shape{1, 1, 1, n}, std::move(v));
}

}  // namespace

TEST_SUITE("ops") {

TEST_CASE("conv2d small closed forms") {
  Tensor<double> ones(Shape{1, 1, 3, 3}, 1.0);
  CHECK(conv2d(ones, ones, Tensor<double>()).item() == 9.0);
  Tensor<double> x(Shape{1, 1, 1, 1}, 2.5), w(Shape{1, 1, 1, 1}, -3.0), b(Shape{1, 1, 1, 1}, 0.25);
  CHECK(conv2d(x, w, b).item() == 2.5 * -3.0 + 0.25);
}

TEST_CASE("conv2d output dims and errors") {
  Tensor<float> x(Shape{2, 4, 9, 7});
  Tensor<float> w(Shape{6, 2, 3, 3});
  const Tensor<float> y = conv2d(x, w, Tensor<float>(), 2, 1, 2);
  CHECK(y.shape() == Shape{2, 6, 5, 4});
  CHECK_THROWS_AS(conv2d(x, w, Tensor<float>(), 1, 1, 3), ConfigError);
  CHECK_THROWS_AS(conv2d(x, Tensor<float>(Shape{6, 3, 3, 3}), Tensor<float>(), 1, 1, 2), ShapeError);
  CHECK_THROWS_AS(conv2d(x, w, Tensor<float>(), 0, 1, 2), ConfigError);
}

TEST_CASE("conv2d matches the direct oracle in both precisions") {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 10; ++k) {
    const int stride = 1 + k % 2, pad = k % 3, groups = k % 4 == 0 ? 2 : 1;
    const Tensor<double> x = test::random_tensor(Shape{2, 4, 9, 8}, rng);
    const Tensor<double> w = test::random_tensor(Shape{6, 4 / groups, 3, 3}, rng);
    const Tensor<double> b = test::random_tensor(Shape{1, 6, 1, 1}, rng);
    const Tensor<double> ref = verify::conv2d_oracle(x, w, b, stride, pad, groups);
    CHECK(test::max_diff(conv2d(x, w, b, stride, pad, groups), ref) < 1e-10);
    const Tensor<float> yf =
        conv2d(x.cast<float>(), w.cast<float>(), b.cast<float>(), stride, pad, groups);
    CHECK(test::max_diff(yf.cast<double>(), ref) < 1e-5);
  }
}

TEST_CASE("matmul closed forms") {
  Tensor<double> a(Shape{1, 1, 1, 2}, std::vector<double>{1, 2});
  Tensor<double> b(Shape{1, 1, 2, 1}, std::vector<double>{3, 4});
  CHECK(matmul_batched(a, b).item() == 11.0);
  Tensor<double> eye(Shape{1, 1, 2, 2}, std::vector<double>{1, 0, 0, 1});
  const Tensor<double> m = test::random_tensor(Shape{1, 1, 2, 2}, 3);
  CHECK(test::bit_equal(matmul_batched(eye, m), m));
  const Tensor<double> p = test::random_tensor(Shape{1, 4, 3, 5}, 4);
  const Tensor<double> q = test::random_tensor(Shape{1, 4, 5, 2}, 5);
  CHECK(test::max_diff(matmul_batched(p, q), verify::matmul_oracle(p, q)) < 1e-12);
  CHECK_THROWS_AS(matmul_batched(p, p), ShapeError);
}

TEST_CASE("softmax rows") {
  CHECK(softmax_lastdim(row({4.2})).item() == 1.0);
  const Tensor<double> h = softmax_lastdim(row({0, 0}));
  CHECK(h.values()[0] == 0.5);
  const Tensor<double> t = softmax_lastdim(row({std::log(2.0), 0}));
  CHECK(std::abs(t.values()[0] - 2.0 / 3.0) < 1e-9);
  CHECK(std::abs(t.values()[1] - 1.0 / 3.0) < 1e-9);

  const Tensor<double> r = test::random_tensor(Shape{2, 3, 4, 7}, 6, -5, 5);
  const Tensor<double> s = softmax_lastdim(r);
  const Tensor<double> shifted = softmax_lastdim(add_scalar(r, 3.0));
  CHECK(test::max_diff(s, shifted) < 1e-6);
  for (std::int64_t i = 0; i < 2 * 3 * 4; ++i) {
    double sum = 0;
    for (int j = 0; j < 7; ++j) sum += s.values()[static_cast<std::size_t>(i * 7 + j)];
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("layer norm over channels") {
  Tensor<double> one(Shape{1, 2, 1, 1}, 1.0), zero(Shape{1, 2, 1, 1}, 0.0);
  const Tensor<double> c = layer_norm(Tensor<double>(Shape{1, 2, 3, 3}, 4.0), one, zero);
  for (double v : c.values()) CHECK(v == 0.0);
  const Tensor<double> pm = layer_norm(Tensor<double>(Shape{1, 2, 1, 1}, std::vector<double>{1, -1}),
                                       one, zero, 1e-12);
  CHECK(std::abs(pm.values()[0] - 1.0) < 1e-9);
  CHECK(std::abs(pm.values()[1] + 1.0) < 1e-9);
  const Tensor<double> five =
      layer_norm(test::random_tensor(Shape{1, 2, 2, 2}, 7), zero, Tensor<double>(Shape{1, 2, 1, 1}, 5.0));
  for (double v : five.values()) CHECK(v == 5.0);

  const Tensor<double> x = test::random_tensor(Shape{2, 5, 3, 3}, 8, -3, 3);
  const Tensor<double> y = layer_norm(x, Tensor<double>(Shape{1, 5, 1, 1}, 1.0),
                                      Tensor<double>(Shape{1, 5, 1, 1}, 0.0), 1e-12);
  for (std::int64_t pos = 0; pos < 9; ++pos) {
    double m = 0, v = 0;
    for (int ch = 0; ch < 5; ++ch) m += y.values()[static_cast<std::size_t>(ch * 9 + pos)] / 5;
    for (int ch = 0; ch < 5; ++ch) {
      const double d = y.values()[static_cast<std::size_t>(ch * 9 + pos)] - m;
      v += d * d / 5;
    }
    CHECK(std::abs(m) < 1e-5);
    CHECK(std::abs(v - 1.0) < 1e-5);
  }
  CHECK_THROWS_AS(layer_norm(x, one, zero), ShapeError);
}

TEST_CASE("activations") {
  CHECK(activation(Tensor<double>::scalar(0.0), Activation::silu).item() == 0.0);
  CHECK(activation(Tensor<double>::scalar(0.0), Activation::gelu).item() == 0.0);
  CHECK(std::abs(activation(Tensor<double>::scalar(1.0), Activation::silu).item() -
                 1.0 / (1.0 + std::exp(-1.0))) < 1e-15);
  // exact Gaussian-CDF form: gelu(1) = Phi(1)
  CHECK(std::abs(activation(Tensor<double>::scalar(1.0), Activation::gelu).item() -
                 0.5 * (1.0 + std::erf(1.0 / std::numbers::sqrt2))) < 1e-15);
  CHECK(parse_activation("silu") == Activation::silu);
  CHECK_THROWS_AS(parse_activation("relu"), ConfigError);
}

TEST_CASE("reflect pad examples") {
  const Tensor<double> r = reflect_pad2d(row({1, 2, 3}), Pad2d{1, 1, 0, 0});
  CHECK(std::vector<double>(r.values().begin(), r.values().end()) == std::vector<double>{2, 1, 2, 3, 2});
  const Tensor<double> x = test::random_tensor(Shape{1, 2, 3, 4}, 9);
  CHECK(test::bit_equal(reflect_pad2d(x, Pad2d{}), x));
  const Tensor<double> q(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const Tensor<double> t = reflect_pad2d(q, Pad2d{0, 0, 1, 0});
  CHECK(t(0, 0, 0, 0) == 3.0);
  CHECK(t(0, 0, 0, 1) == 4.0);
  CHECK_THROWS_AS(reflect_pad2d(x, Pad2d{4, 0, 0, 0}), ConfigError);
  CHECK_THROWS_AS(reflect_pad2d(x, Pad2d{-1, 0, 0, 0}), ConfigError);
}

TEST_CASE("folded reflect pad agrees with the oracle and the strict pad") {
  const Tensor<double> x = test::random_tensor(Shape{1, 2, 3, 4}, 10);
  CHECK(test::bit_equal(reflect_pad2d_folded(x, Pad2d{2, 3, 1, 2}), reflect_pad2d(x, Pad2d{2, 3, 1, 2})));
  CHECK(test::bit_equal(reflect_pad2d_folded(x, Pad2d{9, 7, 5, 8}),
                        verify::reflect_pad_oracle(x, 9, 7, 5, 8)));
  CHECK(reflect_index(-1, 3) == 1);
  CHECK(reflect_index(3, 3) == 1);
  CHECK(reflect_index(5, 1) == 0);
}

TEST_CASE("broadcasting elementwise ops") {
  const Tensor<double> a = test::random_tensor(Shape{2, 3, 2, 2}, 12);
  const Tensor<double> b(Shape{1, 3, 1, 1}, std::vector<double>{1, 2, 3});
  const Tensor<double> s = add(a, b);
  CHECK(s(1, 2, 1, 0) == a(1, 2, 1, 0) + 3.0);
  CHECK(mul(a, b)(0, 1, 0, 1) == a(0, 1, 0, 1) * 2.0);
  CHECK_THROWS_AS(add(a, Tensor<double>(Shape{1, 2, 1, 1})), ShapeError);
}

TEST_CASE("rearrangements") {
  const Tensor<double> x = test::random_tensor(Shape{1, 3, 4, 5}, 13);
  const Tensor<double> t = transpose_last2(x);
  CHECK(t.shape() == Shape{1, 3, 5, 4});
  CHECK(t(0, 2, 4, 1) == x(0, 2, 1, 4));
  const Tensor<double> c = crop(x, 1, 2, 2, 3);
  CHECK(c(0, 1, 0, 0) == x(0, 1, 1, 2));
  CHECK_THROWS_AS(crop(x, 3, 0, 2, 2), ShapeError);
  const Tensor<double> r = roll(x, 1, -2);
  CHECK(r(0, 0, 1, 0) == x(0, 0, 0, 2));
  CHECK(test::bit_equal(roll(r, -1, 2), x));
  const Tensor<double> sc = slice_channels(x, 1, 2);
  CHECK(sc(0, 0, 3, 4) == x(0, 1, 3, 4));
  CHECK_THROWS_AS(reshape(x, Shape{1, 1, 1, 59}), ShapeError);
  CHECK(global_avg_pool(Tensor<double>(Shape{1, 2, 3, 3}, 2.0)).values()[1] == 2.0);
}

TEST_CASE("kernels are deterministic") {
  const Tensor<float> x = test::random_tensor<float>(Shape{2, 8, 12, 12}, 14);
  const Tensor<float> w = test::random_tensor<float>(Shape{8, 8, 3, 3}, 15);
  CHECK(test::bit_equal(conv2d(x, w, Tensor<float>(), 1, 1), conv2d(x, w, Tensor<float>(), 1, 1)));
}

}  // TEST_SUITE
