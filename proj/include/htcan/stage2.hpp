#pragma once

// Stereo enhancement network: pixel-unshuffled views, shared-weight NAF
// blocks with scanline cross-attention (SCAM) between the views, pixel-shuffle
// head and a global residual. Stage 3 is the same network under the
// "stage3" parameter prefix.

#include <string>
#include <vector>

#include "htcan/pixel_ops.hpp"
#include "htcan/weights.hpp"

namespace htcan {

struct Stage2Config {
  int image_channels = 3;
  int channels = 128;
  int blocks = 128;
  int unshuffle = 4;
  int scam_every = 2;
  int dw_expansion = 2;
  int ffn_expansion = 2;
  double norm_eps = 1e-6;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  int scam_count() const { return blocks / scam_every; }

  /// C=8, four blocks, u=2, a SCAM after every second block.
  static Stage2Config tiny();
};

/// Channel halves multiplied elementwise: (n, 2k, h, w) -> (n, k, h, w).
template <typename T>
Tensor<T> simple_gate(const Tensor<T>& x);

template <typename T>
struct NafBlockWeights {
  Tensor<T> norm1_w, norm1_b;
  Tensor<T> conv1_w, conv1_b;  // 1x1 expand
  Tensor<T> conv2_w, conv2_b;  // depthwise 3x3
  Tensor<T> sca_w, sca_b;      // 1x1 after global pooling
  Tensor<T> conv3_w, conv3_b;  // 1x1 project
  Tensor<T> beta;
  Tensor<T> norm2_w, norm2_b;
  Tensor<T> conv4_w, conv4_b;
  Tensor<T> conv5_w, conv5_b;
  Tensor<T> gamma;
};

template <typename T>
Tensor<T> naf_block_forward(const Tensor<T>& x, const NafBlockWeights<T>& w, double eps = 1e-6);

template <typename T>
struct ScamWeights {
  Tensor<T> norm_l_w, norm_l_b, norm_r_w, norm_r_b;
  Tensor<T> l_proj1_w, l_proj1_b, r_proj1_w, r_proj1_b;  // queries / keys
  Tensor<T> l_proj2_w, l_proj2_b, r_proj2_w, r_proj2_b;  // values
  Tensor<T> beta, gamma;                                 // left / right output scales
};

/// Cross-attention restricted to matching rows. Both directions use the
/// score matrix Q_L K_R^T / sqrt(C), each softmax-normalized over its keys.
template <typename T>
StereoPair<T> scam_forward(const Tensor<T>& fl, const Tensor<T>& fr, const ScamWeights<T>& w,
                           double eps = 1e-6);

std::vector<ParamSpec> stage2_param_specs(const Stage2Config& cfg,
                                          const std::string& prefix = "stage2");

/// Copies every left-view SCAM parameter onto its right-view twin so the
/// network becomes equivariant under view swapping.
void tie_stereo_views(WeightStore& store, const Stage2Config& cfg,
                      const std::string& prefix = "stage2");

template <typename T>
class Stage2Net {
 public:
  Stage2Net(Stage2Config cfg, ParamSet<T> params, std::string prefix = "stage2");
  static Stage2Net from_store(const Stage2Config& cfg, const WeightStore& store,
                              const std::string& prefix = "stage2");

  const Stage2Config& config() const { return cfg_; }
  const std::string& prefix() const { return prefix_; }
  const ParamSet<T>& params() const { return params_; }
  ParamSet<T>& params() { return params_; }

  /// Output dims equal input dims.
  StereoPair<T> forward(const StereoPair<T>& pair) const;

  NafBlockWeights<T> block_weights(int block) const;
  ScamWeights<T> scam_weights(int index) const;

 private:
  Stage2Config cfg_;
  ParamSet<T> params_;
  std::string prefix_;
};

template <typename T>
StereoPair<T> stage2_forward(const StereoPair<T>& pair, const WeightStore& weights,
                             const Stage2Config& cfg, const std::string& prefix = "stage2");

}  // namespace htcan
