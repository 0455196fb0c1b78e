#include "htcan/weights.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace htcan {

namespace {

constexpr char kMagic[4] = {'H', 'T', 'W', '1'};

static_assert(std::endian::native == std::endian::little,
              "weight serialization assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void scalar(U v) {
    bytes(&v, sizeof(U));
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  void bytes(void* p, std::size_t n) {
    if (pos_ + n > in_.size()) throw LoadError("weight file truncated");
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  template <typename U>
  U scalar() {
    U v{};
    bytes(&v, sizeof(U));
    return v;
  }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
  return static_cast<std::uint32_t>(crc);
}

void require_finite(const std::string& name, const Tensor<float>& t) {
  for (float v : t.values()) {
    if (!std::isfinite(v)) throw LoadError("weight '" + name + "' contains NaN or Inf");
  }
}

}  // namespace

void WeightStore::set(const std::string& name, Tensor<float> value) {
  if (name.empty() || name.size() > 0xFFFF) throw UsageError("invalid weight name length");
  require_finite(name, value);
  tensors_[name] = std::move(value);
}

const Tensor<float>& WeightStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw LoadError("missing weight '" + name + "'");
  return it->second;
}

std::vector<std::uint8_t> WeightStore::serialize() const {
  Writer w;
  w.bytes(kMagic, 4);
  w.scalar<std::uint32_t>(kVersion);
  w.scalar<std::uint32_t>(static_cast<std::uint32_t>(tensors_.size()));
  for (const auto& [name, t] : tensors_) {
    w.scalar<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.scalar<std::uint8_t>(0);
    w.scalar<std::uint8_t>(4);
    for (auto d : t.shape().dims) w.scalar<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.bytes(t.values().data(), t.values().size_bytes());
  }
  const std::uint32_t crc = crc32_of(w.buffer());
  w.scalar<std::uint32_t>(crc);
  return std::move(w.buffer());
}

WeightStore WeightStore::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw LoadError("weight file too short");
  const auto body = bytes.first(bytes.size() - 4);
  std::uint32_t stored_crc = 0;
  std::memcpy(&stored_crc, bytes.data() + body.size(), 4);
  if (crc32_of(body) != stored_crc) throw LoadError("weight file CRC mismatch");

  Reader r(body);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw LoadError("not an HTW1 weight file");
  const auto version = r.scalar<std::uint32_t>();
  if (version != kVersion) {
    throw LoadError("unsupported weight format version " + std::to_string(version));
  }
  const auto count = r.scalar<std::uint32_t>();
  WeightStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.scalar<std::uint16_t>();
    std::string name(len, '\0');
    r.bytes(name.data(), len);
    const auto dtype = r.scalar<std::uint8_t>();
    if (dtype != 0) throw LoadError("weight '" + name + "': unsupported dtype " +
                                    std::to_string(dtype));
    const auto rank = r.scalar<std::uint8_t>();
    if (rank > 4) throw LoadError("weight '" + name + "': rank " + std::to_string(rank) + " > 4");
    Shape shape{1, 1, 1, 1};
    for (std::uint8_t d = 0; d < rank; ++d) {
      shape.dims[4 - rank + d] = static_cast<std::int64_t>(r.scalar<std::uint32_t>());
    }
    std::vector<float> data(static_cast<std::size_t>(shape.numel()));
    r.bytes(data.data(), data.size() * sizeof(float));
    if (store.contains(name)) throw LoadError("duplicate weight '" + name + "'");
    store.set(name, Tensor<float>(shape, std::move(data)));
  }
  if (r.position() != body.size()) throw LoadError("trailing bytes in weight file");
  return store;
}

void WeightStore::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

WeightStore WeightStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open weight file '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

WeightStore WeightStore::renamed_prefix(const std::string& from, const std::string& to) const {
  WeightStore out;
  for (const auto& [name, t] : tensors_) {
    if (name.rfind(from, 0) == 0) {
      out.set(to + name.substr(from.size()), t.clone());
    } else {
      out.set(name, t.clone());
    }
  }
  return out;
}

WeightStore WeightStore::without_prefix(const std::string& prefix) const {
  WeightStore out;
  for (const auto& [name, t] : tensors_) {
    if (name.rfind(prefix, 0) != 0) out.set(name, t.clone());
  }
  return out;
}

void WeightStore::merge(const WeightStore& other) {
  for (const auto& [name, t] : other.tensors_) {
    if (contains(name)) throw UsageError("merge: duplicate weight '" + name + "'");
    set(name, t);
  }
}

WeightStore init_weights(const std::vector<ParamSpec>& specs, std::uint64_t seed, InitMode mode) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  WeightStore store;
  for (const auto& spec : specs) {
    Tensor<float> t(spec.shape);
    auto v = t.values();
    switch (spec.init) {
      case InitKind::zeros:
        break;
      case InitKind::ones:
        std::fill(v.begin(), v.end(), 1.0f);
        break;
      case InitKind::constant:
        std::fill(v.begin(), v.end(), static_cast<float>(spec.value));
        break;
      case InitKind::trunc_normal:
        for (auto& x : v) {
          double s;
          do {
            s = normal(rng);
          } while (std::abs(s) > 2.0);
          x = static_cast<float>(s * spec.value);
        }
        break;
      case InitKind::kaiming_uniform: {
        const double fan_in = static_cast<double>(spec.shape.c() * spec.shape.h() * spec.shape.w());
        std::uniform_real_distribution<double> uni(-1.0 / std::sqrt(fan_in),
                                                   1.0 / std::sqrt(fan_in));
        for (auto& x : v) x = static_cast<float>(uni(rng));
        break;
      }
    }
    if (mode == InitMode::random) {
      for (auto& x : v) x += static_cast<float>(0.1 * normal(rng));
    }
    store.set(spec.name, std::move(t));
  }
  return store;
}

template <typename T>
ParamSet<T> ParamSet<T>::from_store(const WeightStore& store, const std::vector<ParamSpec>& specs) {
  ParamSet<T> set;
  for (const auto& spec : specs) {
    const Tensor<float>& src = store.at(spec.name);
    if (src.numel() != spec.shape.numel()) {
      throw ShapeError("weight '" + spec.name + "' has shape " + src.shape().str() +
                       ", expected " + spec.shape.str());
    }
    Tensor<T> t(spec.shape);
    auto sv = src.values();
    auto dv = t.values();
    for (std::size_t i = 0; i < sv.size(); ++i) dv[i] = static_cast<T>(sv[i]);
    set.params_[spec.name] = std::move(t);
  }
  return set;
}

template <typename T>
WeightStore ParamSet<T>::to_store() const {
  WeightStore store;
  for (const auto& [name, t] : params_) store.set(name, t.template cast<float>());
  return store;
}

template <typename T>
const Tensor<T>& ParamSet<T>::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw LoadError("missing weight '" + name + "'");
  return it->second;
}

template <typename T>
Tensor<T>& ParamSet<T>::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw LoadError("missing weight '" + name + "'");
  return it->second;
}

template <typename T>
std::int64_t ParamSet<T>::count() const {
  std::int64_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

template <typename T>
void ParamSet<T>::set_requires_grad(bool on) {
  for (auto& [_, t] : params_) t.set_requires_grad(on);
}

template <typename T>
void ParamSet<T>::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

template class ParamSet<float>;
template class ParamSet<double>;

}  // namespace htcan
