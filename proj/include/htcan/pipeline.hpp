#pragma once

// Stage 1 per view (members self-ensembled, then model-ensembled) ->
// stage 2 on the pair -> optional stage 3 on stage-2 outputs -> final
// weighted ensemble. Everything stays in floating point until the PNG write.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "htcan/config.hpp"
#include "htcan/weights.hpp"

namespace htcan {

struct RunOptions {
  int max_stage = 3;          // 1, 2 or 3; clipped to the stages the config enables
  bool self_ensemble = true;  // false overrides every per-stage flag
};

struct DataflowStep {
  std::string step;
  Shape shape;
};

struct PipelineWeights {
  std::vector<WeightStore> stage1;  // one per member
  std::optional<WeightStore> stage2;
  std::optional<WeightStore> stage3;
};

template <typename T>
struct PipelineResult {
  StereoPair<T> output;
  std::vector<DataflowStep> trace;
};

/// Stages actually run for this config and options.
int effective_stages(const PipelineConfig& cfg, const RunOptions& opts);

PipelineWeights load_pipeline_weights(const PipelineConfig& cfg, const RunOptions& opts);

template <typename T>
PipelineResult<T> run_pipeline(const StereoPair<T>& lr, const PipelineConfig& cfg,
                               const PipelineWeights& weights, const RunOptions& opts = {});

/// Reads the two PNGs, runs in the configured precision, writes the outputs.
std::vector<DataflowStep> run_pipeline_files(const std::filesystem::path& left,
                                             const std::filesystem::path& right,
                                             const std::filesystem::path& out_left,
                                             const std::filesystem::path& out_right,
                                             const PipelineConfig& cfg, const RunOptions& opts = {});

std::string format_dataflow(const std::vector<DataflowStep>& trace);

}  // namespace htcan
