#include "htcan/pipeline.hpp"

#include <cstdio>
#include <sstream>

#include "htcan/ensemble.hpp"
#include "htcan/image_io.hpp"
#include "htcan/parallel.hpp"
#include "htcan/stage1.hpp"
#include "htcan/stage2.hpp"

namespace htcan {

namespace {

template <typename T>
void record(std::vector<DataflowStep>& trace, const std::string& step, const StereoPair<T>& p) {
  trace.push_back({step + ".left", p.left.shape()});
  trace.push_back({step + ".right", p.right.shape()});
}

template <typename T>
StereoPair<T> ensemble_pairs(const std::vector<StereoPair<T>>& preds, const std::vector<double>& w) {
  std::vector<Tensor<T>> l, r;
  for (const auto& p : preds) {
    l.push_back(p.left);
    r.push_back(p.right);
  }
  return StereoPair<T>{model_ensemble<T>(l, w), model_ensemble<T>(r, w)};
}

// Stage errors are re-raised naming the stage.
template <typename F>
auto in_stage(const char* stage, F&& f) {
  try {
    return f();
  } catch (const ShapeError& e) {
    throw ShapeError(std::string(stage) + ": " + e.what());
  } catch (const LoadError& e) {
    throw LoadError(std::string(stage) + ": " + e.what());
  }
}

}  // namespace

int effective_stages(const PipelineConfig& cfg, const RunOptions& opts) {
  if (opts.max_stage < 1 || opts.max_stage > 3) throw UsageError("stages must be 1, 12 or 123");
  int stages = 1;
  if (cfg.stage2.enabled) stages = 2;
  if (cfg.stage2.enabled && cfg.stage3.enabled) stages = 3;
  if (opts.max_stage > stages) {
    throw ConfigError("stage " + std::to_string(opts.max_stage) + " requested but the config " +
                      "enables only " + std::to_string(stages));
  }
  return opts.max_stage;
}

PipelineWeights load_pipeline_weights(const PipelineConfig& cfg, const RunOptions& opts) {
  const int stages = effective_stages(cfg, opts);
  PipelineWeights w;
  for (const auto& m : cfg.stage1.members) w.stage1.push_back(WeightStore::load(m.weights));
  if (stages >= 2) w.stage2 = WeightStore::load(cfg.stage2.weights);
  if (stages >= 3) w.stage3 = WeightStore::load(cfg.stage3.weights);
  return w;
}

template <typename T>
PipelineResult<T> run_pipeline(const StereoPair<T>& lr, const PipelineConfig& cfg,
                               const PipelineWeights& weights, const RunOptions& opts) {
  cfg.validate();
  lr.validate("run_pipeline");
  const int stages = effective_stages(cfg, opts);
  if (weights.stage1.size() != cfg.stage1.members.size()) {
    throw UsageError("run_pipeline: " + std::to_string(weights.stage1.size()) +
                     " stage-1 weight sets for " + std::to_string(cfg.stage1.members.size()) +
                     " members");
  }
  if (cfg.threads > 0) set_num_threads(cfg.threads);
  NoTapeScope<T> no_tape;
  PipelineResult<T> result;
  record(result.trace, "input", lr);

  std::vector<StereoPair<T>> members;
  std::vector<double> member_weights;
  for (std::size_t i = 0; i < cfg.stage1.members.size(); ++i) {
    const Stage1Member& m = cfg.stage1.members[i];
    const StereoPair<T> out = in_stage("stage 1", [&] {
      const Stage1Net<T> net = Stage1Net<T>::from_store(m.config, weights.stage1[i]);
      const ImageFn<T> f = [&](const Tensor<T>& x) {
        return stage1_superresolve_image(x, net, cfg.stage1.tiling);
      };
      auto run = [&](const Tensor<T>& x) {
        return opts.self_ensemble && cfg.stage1.self_ensemble ? self_ensemble_mono(f, x) : f(x);
      };
      return StereoPair<T>{run(lr.left), run(lr.right)};
    });
    record(result.trace, "stage1." + m.name, out);
    members.push_back(out);
    member_weights.push_back(m.weight);
  }
  StereoPair<T> current = members.size() == 1 ? members.front() : ensemble_pairs(members, member_weights);
  record(result.trace, "stage1.ensemble", current);

  if (stages >= 2) {
    const StereoPair<T> s2 = in_stage("stage 2", [&] {
      const Stage2Net<T> net = Stage2Net<T>::from_store(cfg.stage2.config, *weights.stage2, "stage2");
      const PairFn<T> g = [&](const StereoPair<T>& p) { return net.forward(p); };
      return opts.self_ensemble && cfg.stage2.self_ensemble ? self_ensemble_stereo(g, current)
                                                            : g(current);
    });
    record(result.trace, "stage2", s2);
    current = s2;
    if (stages >= 3) {
      const StereoPair<T> s3 = in_stage("stage 3", [&] {
        const Stage2Net<T> net = Stage2Net<T>::from_store(cfg.stage3.config, *weights.stage3, "stage3");
        const PairFn<T> g = [&](const StereoPair<T>& p) { return net.forward(p); };
        return opts.self_ensemble && cfg.stage3.self_ensemble ? self_ensemble_stereo(g, s2) : g(s2);
      });
      record(result.trace, "stage3", s3);
      current = ensemble_pairs<T>({s2, s3}, {cfg.stage2_weight, cfg.stage3_weight});
    }
  }
  record(result.trace, "final", current);
  result.output = current;
  return result;
}

std::vector<DataflowStep> run_pipeline_files(const std::filesystem::path& left,
                                             const std::filesystem::path& right,
                                             const std::filesystem::path& out_left,
                                             const std::filesystem::path& out_right,
                                             const PipelineConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  effective_stages(cfg, opts);
  cfg.check_files();
  const PipelineWeights weights = load_pipeline_weights(cfg, opts);
  auto go = [&]<typename T>(T) {
    const StereoPair<T> lr{read_png<T>(left), read_png<T>(right)};
    PipelineResult<T> r = run_pipeline(lr, cfg, weights, opts);
    write_png(out_left, r.output.left);
    write_png(out_right, r.output.right);
    return r.trace;
  };
  return cfg.precision == Precision::float64 ? go(double{}) : go(float{});
}

std::string format_dataflow(const std::vector<DataflowStep>& trace) {
  std::ostringstream os;
  char line[160];
  for (const auto& s : trace) {
    std::snprintf(line, sizeof line, "%-28s %s\n", s.step.c_str(), s.shape.str().c_str());
    os << line;
  }
  return os.str();
}

#define HTCAN_INSTANTIATE(T)                                                                    \
  template PipelineResult<T> run_pipeline(const StereoPair<T>&, const PipelineConfig&,         \
                                          const PipelineWeights&, const RunOptions&);

HTCAN_INSTANTIATE(float)
HTCAN_INSTANTIATE(double)

#undef HTCAN_INSTANTIATE

}  // namespace htcan
