#pragma once

// JSON documents for the pipeline and for toy training. Parse errors carry
// line and column; schema errors carry the dotted field path. Unknown keys
// are rejected so typos fail loudly.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "htcan/stage1.hpp"
#include "htcan/stage2.hpp"
#include "htcan/training.hpp"

namespace htcan {

enum class Precision { float32, float64 };

struct Stage1Member {
  std::string name;
  std::filesystem::path weights;
  double weight = 1.0;
  Stage1Config config;
};

struct Stage1Settings {
  std::vector<Stage1Member> members;
  bool self_ensemble = true;
  TilingConfig tiling;
};

struct StereoStageSettings {
  bool enabled = true;
  Stage2Config config;
  std::filesystem::path weights;
  bool self_ensemble = true;
};

struct PipelineConfig {
  Stage1Settings stage1;
  StereoStageSettings stage2;
  StereoStageSettings stage3;
  double stage2_weight = 0.5;  // final ensemble of stage-2 and stage-3 outputs
  double stage3_weight = 0.5;
  int threads = 0;  // 0 keeps the runtime default
  Precision precision = Precision::float32;

  /// Semantic checks (configs, member weights summing to 1); ConfigError.
  void validate() const;
  /// Every referenced weight file of the enabled stages exists; IoError.
  void check_files() const;
};

/// Relative weight paths are resolved against `base_dir`.
PipelineConfig parse_pipeline_config(std::string_view text, const std::filesystem::path& base_dir);
PipelineConfig load_pipeline_config(const std::filesystem::path& file);

struct ToyTrainConfig {
  Stage1Config stage1 = Stage1Config::tiny();
  Stage2Config stage2 = Stage2Config::tiny();
  TrainConfig train1;
  TrainConfig train2;
  TrainConfig train3;

  const TrainConfig& train(int stage) const;
  TrainConfig& train(int stage);
};

ToyTrainConfig parse_toy_config(std::string_view text);
ToyTrainConfig load_toy_config(const std::filesystem::path& file);

/// Architectures from either document kind: stage-1 member `member` (its
/// overrides applied) or stereo stage 2/3 (stage 3 falls back to stage 2).
Stage1Config stage1_architecture(std::string_view text, int member = 0);
Stage2Config stereo_architecture(std::string_view text, int stage);

std::string read_text_file(const std::filesystem::path& file);

}  // namespace htcan
