#include <algorithm>

#include "doctest.h"
#include "helpers.hpp"
#include "htcan/pixel_ops.hpp"
#include "htcan/verify/oracles.hpp"

using namespace htcan;

TEST_SUITE("pixel_ops") {

TEST_CASE("pixel shuffle index formula") {
  const Tensor<double> x(Shape{1, 4, 1, 1}, std::vector<double>{1, 2, 3, 4});
  const Tensor<double> y = pixel_shuffle(x, 2);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  CHECK(std::vector<double>(y.values().begin(), y.values().end()) == std::vector<double>{1, 2, 3, 4});
  const Tensor<double> z = pixel_unshuffle(y, 2);
  CHECK(test::bit_equal(z, x));
  const Tensor<double> r = test::random_tensor(Shape{2, 3, 4, 6}, 1);
  CHECK(test::bit_equal(pixel_shuffle(r, 1), r));
  CHECK(test::bit_equal(pixel_unshuffle(r, 1), r));
  CHECK_THROWS_AS(pixel_shuffle(r, 2), ShapeError);
  CHECK_THROWS_AS(pixel_unshuffle(r, 4), ShapeError);
}

TEST_CASE("shuffle and window roundtrips on random shapes") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> d(1, 3);
  for (int k = 0; k < 25; ++k) {
    const int r = d(rng) + 1;
    const Shape s{d(rng), d(rng) * r * r, d(rng) * r, d(rng) * r};
    const Tensor<double> x = test::random_tensor(s, rng);
    CHECK(test::bit_equal(pixel_unshuffle(pixel_shuffle(x, r), r), x));
    CHECK(test::bit_equal(pixel_shuffle(pixel_unshuffle(x, r), r), x));
    const Windows<double> w = window_partition(x, r);
    CHECK(test::bit_equal(window_reverse(w.tokens, w.rows, w.cols, r, s), x));
  }
}

TEST_CASE("window partition raster order") {
  std::vector<double> v(16);
  for (int i = 0; i < 16; ++i) v[static_cast<std::size_t>(i)] = i;
  const Tensor<double> x(Shape{1, 1, 4, 4}, v);
  const Windows<double> w = window_partition(x, 2);
  CHECK(w.tokens.shape() == Shape{4, 1, 4, 1});
  CHECK(w.rows == 2);
  CHECK(w.cols == 2);
  const auto t = w.tokens.values();
  CHECK(std::vector<double>(t.begin(), t.begin() + 4) == std::vector<double>{0, 1, 4, 5});
  const Windows<double> one = window_partition(x, 4);
  CHECK(std::vector<double>(one.tokens.values().begin(), one.tokens.values().end()) == v);
  CHECK_THROWS_AS(window_partition(x, 3), ShapeError);
  CHECK_THROWS_AS(window_reverse(w.tokens, 3, 2, 2, x.shape()), ShapeError);
}

TEST_CASE("geometric transforms") {
  const Tensor<double> r(Shape{1, 1, 1, 3}, std::vector<double>{1, 2, 3});
  const Tensor<double> h = apply_geom(r, GeomTransform{.hflip = true});
  CHECK(std::vector<double>(h.values().begin(), h.values().end()) == std::vector<double>{3, 2, 1});
  CHECK(test::bit_equal(apply_geom(r, GeomTransform{}), r));

  const StereoPair<double> p{test::random_tensor(Shape{1, 3, 4, 6}, 3),
                             test::random_tensor(Shape{1, 3, 4, 6}, 4)};
  const StereoPair<double> s = apply_geom(p, GeomTransform{.swap_views = true});
  CHECK(test::bit_equal(s.left, p.right));
  CHECK(test::bit_equal(s.right, p.left));

  const Tensor<double> x = test::random_tensor(Shape{2, 3, 4, 6}, 5);
  CHECK(mono_group().size() == 8);
  for (const auto& t : mono_group()) {
    CHECK(test::bit_equal(apply_geom(apply_geom(x, t), inverse(t)), x));
  }
  CHECK(stereo_group().size() == 8);
  for (const auto& t : stereo_group()) {
    CHECK(t.rot90 == 0);
    const StereoPair<double> back = apply_geom(apply_geom(p, t), inverse(t));
    CHECK(test::bit_equal(back.left, p.left));
    CHECK(test::bit_equal(back.right, p.right));
  }
  const Tensor<double> q = apply_geom(x, GeomTransform{.rot90 = 1});
  CHECK(q.shape() == Shape{2, 3, 6, 4});
}

TEST_CASE("multi-patch assembly") {
  const Tensor<double> img = test::random_tensor(Shape{1, 3, 13, 11}, 6);
  const int p = 4;
  for (auto [y, x] : {std::pair{0, 0}, {5, 3}, {9, 7}, {4, 4}}) {
    const Tensor<double> m = multi_patch_assemble(img, y, x, p);
    CHECK(m.shape() == Shape{1, 27, 4, 4});
    CHECK(test::bit_equal(m, verify::multi_patch_oracle(img, y, x, p)));
    CHECK(test::bit_equal(slice_channels(m, 12, 3), crop(img, y, x, p, p)));
  }
  const Tensor<double> flat(Shape{1, 3, 8, 8}, 0.25);
  for (double v : test::vals(multi_patch_assemble(flat, 0, 4, 4))) CHECK(v == 0.25);
  CHECK_THROWS_AS(multi_patch_assemble(img, 10, 0, 4), UsageError);
  CHECK_THROWS_AS(multi_patch_assemble(img, 0, 0, 0), UsageError);

  const Tensor<double> b = multi_patch_assemble_batch(img, {{0, 0}, {5, 3}}, p);
  CHECK(b.shape() == Shape{2, 27, 4, 4});
  const Tensor<double> second = multi_patch_assemble(img, 5, 3, p);
  const auto bv = b.values();
  CHECK(std::equal(second.values().begin(), second.values().end(), bv.begin() + 27 * 16));
}

TEST_CASE("pad to multiple") {
  const Tensor<double> x = test::random_tensor(Shape{1, 2, 5, 7}, 7);
  const Tensor<double> y = pad_to_multiple(x, 4);
  CHECK(y.shape() == Shape{1, 2, 8, 8});
  CHECK(test::bit_equal(crop(y, 0, 0, 5, 7), x));
  CHECK(test::bit_equal(pad_to_multiple(x, 1), x));
}

}  // TEST_SUITE
