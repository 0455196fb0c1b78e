#pragma once

// Single-image super-resolution network: multi-patch shallow conv, cascaded
// residual hybrid attention groups (RHAG), pixel-shuffle reconstruction.

#include <string>
#include <vector>

#include "htcan/ops.hpp"
#include "htcan/pixel_ops.hpp"
#include "htcan/weights.hpp"

namespace htcan {

struct Stage1Config {
  int image_channels = 3;
  int channels = 180;
  int groups = 12;
  int blocks_per_group = 2;
  int heads = 2;
  int window = 24;
  int scale = 4;
  Activation activation = Activation::gelu;
  int patch = 48;
  int ca_reduction = 4;
  int mlp_ratio = 2;
  double overlap_ratio = 0.5;
  bool shift = true;
  double norm_eps = 1e-6;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  /// Side of the overlapping key/value window used by the cross-attention block.
  int overlap_window() const;

  /// C=8, one group with one block, ws=4, p=8: the test configuration.
  static Stage1Config tiny();
};

/// Projection weights of one attention layer; each weight is (out, in, 1, 1).
template <typename T>
struct AttentionWeights {
  Tensor<T> q_w, q_b, k_w, k_b, v_w, v_b, proj_w, proj_b;
};

/// Scaled dot-product attention over token rows.
/// q: (B, 1, Tq, C); k, v: (B, 1, Tk, C). `bias` is (1, heads, Tq, Tk) and
/// `mask` (B, 1, Tq, Tk); either may be undefined. Returns (B, 1, Tq, C)
/// before any output projection.
template <typename T>
Tensor<T> attention_core(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int heads,
                         const Tensor<T>& bias, const Tensor<T>& mask);

/// Per window: proj(softmax(Q K^T / sqrt(C / heads) + bias + mask) V).
template <typename T>
Tensor<T> window_attention(const Tensor<T>& tokens, const AttentionWeights<T>& w, int heads,
                           const Tensor<T>& bias, const Tensor<T>& mask = Tensor<T>());

/// Index into a (2ws-1)^2 relative position table for query/key tokens of
/// one ws x ws window; (ws+ows-1)^2 for the overlapping variant.
std::vector<std::int64_t> relative_position_index(int ws, int key_ws);

/// Names, shapes and default initializers of every stage-1 parameter.
std::vector<ParamSpec> stage1_param_specs(const Stage1Config& cfg);

template <typename T>
class Stage1Net {
 public:
  Stage1Net(Stage1Config cfg, ParamSet<T> params);
  static Stage1Net from_store(const Stage1Config& cfg, const WeightStore& store);

  const Stage1Config& config() const { return cfg_; }
  const ParamSet<T>& params() const { return params_; }
  ParamSet<T>& params() { return params_; }

  /// (n, 9c, p, p) multi-patch input -> (n, c, p*scale, p*scale).
  Tensor<T> forward(const Tensor<T>& patch_in) const;

  // Sub-blocks, exposed so tests can compose them by hand. Spatial dims of
  // `x` must be multiples of the window size.
  Tensor<T> shallow(const Tensor<T>& padded_in) const;
  Tensor<T> trunk(const Tensor<T>& x) const;
  Tensor<T> rhag(const Tensor<T>& x, int group) const;
  Tensor<T> hab(const Tensor<T>& x, int group, int block) const;
  Tensor<T> ocab(const Tensor<T>& x, int group) const;
  Tensor<T> cab(const Tensor<T>& x, const std::string& prefix) const;
  Tensor<T> mlp(const Tensor<T>& x, const std::string& prefix) const;
  Tensor<T> reconstruct(const Tensor<T>& deep, const Tensor<T>& shallow) const;

  AttentionWeights<T> attention_weights(const std::string& prefix) const;
  /// Relative position bias gathered to (1, heads, Tq, Tk).
  Tensor<T> relative_bias(const std::string& table, int key_ws) const;
  /// -100 / 0 additive mask for shifted windows over an h x w map, (n*nw, 1, T, T).
  Tensor<T> shift_mask(std::int64_t n, std::int64_t h, std::int64_t w) const;
  /// Whether block `block` uses shifted windows on an h x w map.
  bool shifted(int block, std::int64_t h, std::int64_t w) const;

 private:
  Stage1Config cfg_;
  ParamSet<T> params_;
};

template <typename T>
Tensor<T> stage1_forward(const Tensor<T>& patch_in, const WeightStore& weights,
                         const Stage1Config& cfg);

struct TilingConfig {
  int patch = 0;  // 0: use the network's configured patch
  int batch = 16;
};

/// Whole-image inference by p x p center patches on a grid; the last patch
/// in each direction is shifted to end at the image edge and overlapped
/// pixels are averaged.
template <typename T>
Tensor<T> stage1_superresolve_image(const Tensor<T>& image, const Stage1Net<T>& net,
                                    const TilingConfig& tiling = {});

/// Top-left offsets of the tiles along one axis of length n.
std::vector<std::int64_t> tile_starts(std::int64_t n, std::int64_t p);

}  // namespace htcan
