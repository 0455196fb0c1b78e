#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "htcan/tensor.hpp"

namespace htcan {

/// Named float32 tensors plus the "HTW1" binary container:
///
///   magic "HTW1" | version u32 | count u32 |
///   per tensor: name_len u16, name bytes, dtype u8 (0 = f32), rank u8,
///               dims u32 x rank, data |
///   crc32 u32 over every preceding byte
///
/// All integers and floats are little-endian. Tensors are written in name
/// order, which makes save() byte-deterministic.
class WeightStore {
 public:
  static constexpr std::uint32_t kVersion = 1;

  /// Inserts or replaces; rejects non-finite values.
  void set(const std::string& name, Tensor<float> value);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  /// Throws LoadError naming the parameter when absent.
  const Tensor<float>& at(const std::string& name) const;
  std::size_t size() const { return tensors_.size(); }
  const std::map<std::string, Tensor<float>>& tensors() const { return tensors_; }

  std::vector<std::uint8_t> serialize() const;
  static WeightStore deserialize(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static WeightStore load(const std::filesystem::path& path);

  /// Copy with every name starting with `from` rewritten to start with `to`.
  WeightStore renamed_prefix(const std::string& from, const std::string& to) const;

  /// Copy with every name starting with `prefix` removed.
  WeightStore without_prefix(const std::string& prefix) const;

  /// Adds every tensor of `other`; names must not collide.
  void merge(const WeightStore& other);

 private:
  std::map<std::string, Tensor<float>> tensors_;
};

enum class InitKind { zeros, ones, constant, trunc_normal, kaiming_uniform };

/// One learned tensor of a network: name, shape and default initializer.
struct ParamSpec {
  std::string name;
  Shape shape;
  InitKind init = InitKind::zeros;
  double value = 0.0;  // std-dev for trunc_normal, constant for constant
};

enum class InitMode {
  standard,  // the documented initializers
  random,    // standard plus N(0, 0.1) noise on every element, so no branch is inert
};

/// Deterministic initialization of `specs` from `seed`.
WeightStore init_weights(const std::vector<ParamSpec>& specs, std::uint64_t seed,
                         InitMode mode = InitMode::standard);

/// The learned tensors of one network in working precision.
template <typename T>
class ParamSet {
 public:
  ParamSet() = default;

  /// Converts every spec'd tensor from `store`, checking presence and shape.
  static ParamSet from_store(const WeightStore& store, const std::vector<ParamSpec>& specs);
  WeightStore to_store() const;

  const Tensor<T>& get(const std::string& name) const;
  Tensor<T>& get(const std::string& name);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  void set(const std::string& name, Tensor<T> value) { params_[name] = std::move(value); }

  std::map<std::string, Tensor<T>>& all() { return params_; }
  const std::map<std::string, Tensor<T>>& all() const { return params_; }
  std::int64_t count() const;

  void set_requires_grad(bool on);
  void zero_grad();

 private:
  std::map<std::string, Tensor<T>> params_;
};

}  // namespace htcan
