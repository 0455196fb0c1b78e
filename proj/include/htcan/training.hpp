#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "htcan/stage1.hpp"
#include "htcan/stage2.hpp"

namespace htcan {

/// mean(sqrt((pred - target)^2 + eps^2))
template <typename T>
Tensor<T> charbonnier_loss(const Tensor<T>& pred, const Tensor<T>& target, double eps = 1e-3);

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

enum class OptimKind { adam, adamw };

struct OptimConfig {
  OptimKind kind = OptimKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 0.0;
  double eps = 1e-8;

  void validate() const;
};

/// First and second moments of one parameter tensor.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
};

/// One bias-corrected adaptive-moment update. adamw decays the parameter by
/// lr * weight_decay * p before the moment step; adam folds weight_decay * p
/// into the gradient.
template <typename T>
void optimizer_step(std::span<T> param, std::span<const T> grad, AdamState& state,
                    const OptimConfig& cfg, double lr);

class Optimizer {
 public:
  explicit Optimizer(OptimConfig cfg);
  /// Updates every parameter from its accumulated gradient.
  template <typename T>
  void step(ParamSet<T>& params, double lr);
  const std::map<std::string, AdamState>& state() const { return state_; }

 private:
  OptimConfig cfg_;
  std::map<std::string, AdamState> state_;
};

enum class LrKind { multistep_half, cosine };

struct LrSchedule {
  LrKind kind = LrKind::multistep_half;
  double init_lr = 2e-4;
  std::vector<std::int64_t> milestones;
  std::int64_t total_iters = 0;
  double min_lr = 0.0;

  void validate() const;
};

/// multistep_half: init_lr / 2^(milestones <= iter); cosine: min_lr +
/// (init_lr - min_lr)(1 + cos(pi iter / total)) / 2, clamped to min_lr past
/// the end and exact at both endpoints.
double lr_at(std::int64_t iter, const LrSchedule& s);

struct AugmentConfig {
  bool channel_shuffle = false;
  bool hflip = false;
  bool vflip = false;
  bool rotation = false;
  bool mixup = false;
  double mixup_alpha = 1.2;
};

/// Low- and high-resolution views of one training example.
template <typename T>
struct TrainSample {
  StereoPair<T> lr;
  StereoPair<T> hr;
};

/// One concrete draw of the random augmentation parameters.
struct AugmentDraw {
  std::vector<int> channel_perm;  // empty: identity
  bool hflip = false;             // also swaps the views
  bool vflip = false;
  int rot90 = 0;
  double mix = 1.0;  // weight of the sample against its mixup partner
};

AugmentDraw draw_augment(const AugmentConfig& cfg, int channels, std::mt19937_64& rng);

/// Applies mixup (when mix != 1 and a partner is given), then the channel
/// permutation, flips and rotation, identically to every image of the sample.
template <typename T>
TrainSample<T> apply_augment(const TrainSample<T>& sample, const AugmentDraw& draw,
                             const TrainSample<T>* partner = nullptr);

template <typename T>
TrainSample<T> augment(const TrainSample<T>& sample, const TrainSample<T>& partner,
                       const AugmentConfig& cfg, std::mt19937_64& rng);

template <typename T>
Tensor<T> permute_channels(const Tensor<T>& x, const std::vector<int>& perm);

struct ToyDataConfig {
  int pairs = 16;
  int hr_height = 32;
  int hr_width = 96;
  int scale = 4;
  int max_disparity = 6;
  std::uint64_t seed = 1;
};

/// Procedural stereo pairs: HR views are shifted crops of one textured
/// canvas (sinusoids plus coloured rectangles), LR views are their bicubic
/// downsamples.
std::vector<TrainSample<float>> make_toy_dataset(const ToyDataConfig& cfg);

struct TrainConfig {
  int iters = 300;
  int batch = 4;
  std::uint64_t seed = 0;
  OptimConfig optim;
  LrSchedule schedule;
  AugmentConfig augment;
  int mse_from = -1;  // first iteration trained with MSE; < 0 never switches
  double charbonnier_eps = 1e-3;
  int crop_h = 16;  // HR crop for stages 2 and 3
  int crop_w = 48;
  bool fixed_batch = false;  // draw one batch and reuse it every iteration
  double grad_clip = 0.0;    // global-norm clip; 0 disables
  int smooth_window = 20;
  bool self_ensemble_inputs = false;  // feed self-ensembled predictions downstream
  ToyDataConfig data;

  void validate() const;
};

struct TraceRow {
  int iter = 0;
  double lr = 0.0;
  double loss = 0.0;
  bool mse = false;

  bool operator==(const TraceRow&) const = default;
};

struct TrainTrace {
  std::vector<TraceRow> rows;

  /// `iter,lr,loss` with a header line.
  std::string csv() const;
  /// Mean loss of the first and last `window` Charbonnier-phase iterations.
  double smoothed_initial(int window) const;
  double smoothed_final(int window) const;
};

struct TrainResult {
  WeightStore weights;
  TrainTrace trace;
};

TrainResult train_stage1(const Stage1Config& cfg, const WeightStore& init,
                         const std::vector<TrainSample<float>>& data, const TrainConfig& tc);

/// Trains a stereo enhancer mapping inputs[i] to targets[i].
TrainResult train_stereo(const Stage2Config& cfg, const WeightStore& init,
                         const std::vector<StereoPair<float>>& inputs,
                         const std::vector<StereoPair<float>>& targets, const TrainConfig& tc,
                         const std::string& prefix);

struct ToySetup {
  Stage1Config stage1;
  Stage2Config stage2;
  std::optional<WeightStore> init;            // otherwise default initialization from tc.seed
  std::optional<WeightStore> stage1_weights;  // required for stages 2 and 3
  std::optional<WeightStore> stage2_weights;  // required for stage 3
};

/// Stage 1 trains on LR/HR patches; stage 2 on stage-1 predictions; stage 3
/// on stage-2 self-ensembled predictions, starting from the stage-2 weights.
TrainResult train_toy(int stage, const ToySetup& setup, const TrainConfig& tc);

}  // namespace htcan
