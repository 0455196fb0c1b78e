#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "htcan/stage1.hpp"
#include "htcan/stage2.hpp"
#include "htcan/weights.hpp"

using namespace htcan;

namespace {

// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
std::uint32_t crc32_bitwise(const std::vector<std::uint8_t>& data) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::uint8_t b : data) {
    crc ^= b;
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
  std::uint8_t b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  out.insert(out.end(), b, b + sizeof(U));
}

std::vector<std::uint8_t> hand_built(bool with_crc = true) {
  std::vector<std::uint8_t> b = {'H', 'T', 'W', '1'};
  put<std::uint32_t>(b, 1);
  put<std::uint32_t>(b, 1);
  put<std::uint16_t>(b, 1);
  b.push_back('w');
  b.push_back(0);
  b.push_back(4);
  for (std::uint32_t d : {1u, 1u, 1u, 2u}) put(b, d);
  put(b, 1.0f);
  put(b, -2.0f);
  if (with_crc) put(b, crc32_bitwise(b));
  return b;
}

}  // namespace

TEST_SUITE("weights") {

TEST_CASE("serialization matches the hand-built byte layout") {
  WeightStore s;
  s.set("w", Tensor<float>(Shape{1, 1, 1, 2}, std::vector<float>{1.0f, -2.0f}));
  CHECK(s.serialize() == hand_built());
  const WeightStore back = WeightStore::deserialize(hand_built());
  CHECK(back.at("w").values()[1] == -2.0f);
}

TEST_CASE("lower-rank entries are read as trailing dims") {
  std::vector<std::uint8_t> b = {'H', 'T', 'W', '1'};
  put<std::uint32_t>(b, 1);
  put<std::uint32_t>(b, 1);
  put<std::uint16_t>(b, 1);
  b.push_back('v');
  b.push_back(0);
  b.push_back(1);
  put<std::uint32_t>(b, 3);
  for (float f : {1.0f, 2.0f, 3.0f}) put(b, f);
  put(b, crc32_bitwise(b));
  CHECK(WeightStore::deserialize(b).at("v").shape() == Shape{1, 1, 1, 3});
}

TEST_CASE("corruption is detected") {
  std::vector<std::uint8_t> b = hand_built();
  b[20] ^= 0x01;
  CHECK_THROWS_AS(WeightStore::deserialize(b), LoadError);
  CHECK_THROWS_AS(WeightStore::deserialize(hand_built(false)), LoadError);
  std::vector<std::uint8_t> magic = hand_built(false);
  magic[0] = 'X';
  put(magic, crc32_bitwise(magic));
  CHECK_THROWS_AS(WeightStore::deserialize(magic), LoadError);
  CHECK_THROWS_AS(WeightStore::deserialize(std::vector<std::uint8_t>(8)), LoadError);
}

TEST_CASE("non-finite values are rejected") {
  WeightStore s;
  CHECK_THROWS_AS(s.set("bad", Tensor<float>(Shape{1, 1, 1, 1}, std::nanf(""))), LoadError);
  std::vector<std::uint8_t> b = hand_built(false);
  const float inf = std::numeric_limits<float>::infinity();
  std::memcpy(b.data() + b.size() - 4, &inf, 4);
  put(b, crc32_bitwise(b));
  CHECK_THROWS_AS(WeightStore::deserialize(b), LoadError);
}

TEST_CASE("file roundtrip is bit exact") {
  const WeightStore w = init_weights(stage2_param_specs(Stage2Config::tiny()), 3, InitMode::random);
  const auto path = std::filesystem::temp_directory_path() / "htcan_weights_roundtrip.htw";
  w.save(path);
  const WeightStore r = WeightStore::load(path);
  CHECK(r.serialize() == w.serialize());
  std::filesystem::remove(path);
  CHECK_THROWS_AS(WeightStore::load(path), LoadError);
}

TEST_CASE("initialization is deterministic and follows the specs") {
  const auto specs = stage1_param_specs(Stage1Config::tiny());
  const WeightStore a = init_weights(specs, 9);
  CHECK(a.serialize() == init_weights(specs, 9).serialize());
  CHECK(a.serialize() != init_weights(specs, 10).serialize());
  CHECK(a.size() == specs.size());
  for (const auto& spec : specs) {
    const Tensor<float>& t = a.at(spec.name);
    CHECK(t.shape() == spec.shape);
    if (spec.init == InitKind::zeros) {
      for (float v : t.values()) CHECK(v == 0.0f);
    }
    if (spec.init == InitKind::trunc_normal) {
      for (float v : t.values()) CHECK(std::abs(v) <= 2.0 * spec.value + 1e-7);
    }
  }
  const WeightStore r = init_weights(specs, 9, InitMode::random);
  CHECK(r.at("stage1.g0.conv.weight").values()[0] != 0.0f);
}

TEST_CASE("param sets check presence and shape") {
  const auto specs = stage2_param_specs(Stage2Config::tiny());
  WeightStore w = init_weights(specs, 1);
  const ParamSet<double> p = ParamSet<double>::from_store(w, specs);
  CHECK(p.to_store().serialize() == w.serialize());
  WeightStore missing = w.without_prefix("stage2.b0.");
  CHECK_THROWS_WITH_AS(ParamSet<double>::from_store(missing, specs), doctest::Contains("stage2.b0"),
                       LoadError);
  WeightStore wrong = w;
  wrong.set("stage2.intro.bias", Tensor<float>(Shape{1, 1, 1, 3}));
  CHECK_THROWS_AS(ParamSet<double>::from_store(wrong, specs), ShapeError);
}

TEST_CASE("prefix rename, strip and merge") {
  const WeightStore w = init_weights(stage2_param_specs(Stage2Config::tiny()), 1);
  const WeightStore s3 = w.renamed_prefix("stage2", "stage3");
  CHECK(s3.contains("stage3.intro.weight"));
  CHECK_FALSE(s3.contains("stage2.intro.weight"));
  WeightStore both = w;
  both.merge(s3);
  CHECK(both.size() == 2 * w.size());
  CHECK_THROWS_AS(both.merge(w), UsageError);
  CHECK(both.without_prefix("stage3").size() == w.size());
}

}  // TEST_SUITE
