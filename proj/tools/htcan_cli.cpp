// Command-line front end. Exit status: 0 success, 1 validation or usage
// error, 2 file or weight IO error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "htcan/config.hpp"
#include "htcan/ensemble.hpp"
#include "htcan/image_io.hpp"
#include "htcan/metrics.hpp"
#include "htcan/parallel.hpp"
#include "htcan/pipeline.hpp"
#include "htcan/training.hpp"
#include "htcan/verify/gradcheck.hpp"
#include "htcan/verify/selftest.hpp"

namespace fs = std::filesystem;
using namespace htcan;

namespace {

std::vector<fs::path> pngs_in(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Stereo pairs stored as <name>_L.png / <name>_R.png.
std::vector<NamedPair<double>> read_pairs(const fs::path& dir) {
  std::vector<NamedPair<double>> out;
  for (const auto& p : pngs_in(dir)) {
    const std::string stem = p.stem().string();
    if (stem.size() < 2 || stem.substr(stem.size() - 2) != "_L") continue;
    const std::string name = stem.substr(0, stem.size() - 2);
    const fs::path right = dir / (name + "_R.png");
    if (!fs::is_regular_file(right)) throw IoError("missing right view " + right.string());
    out.push_back({name, StereoPair<double>{read_png<double>(p), read_png<double>(right)}});
  }
  if (out.empty()) throw IoError("no <name>_L.png / <name>_R.png pairs in " + dir.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

int stages_from_flag(const std::string& s) {
  if (s == "1") return 1;
  if (s == "12") return 2;
  if (s == "123") return 3;
  throw UsageError("--stages must be 1, 12 or 123, got '" + s + "'");
}

WeightStore init_store(const std::string& text, int stage, int member, std::uint64_t seed,
                       InitMode mode, bool tie) {
  if (stage == 1) return init_weights(stage1_param_specs(stage1_architecture(text, member)), seed, mode);
  const Stage2Config cfg = stereo_architecture(text, stage);
  const std::string prefix = stage == 2 ? "stage2" : "stage3";
  WeightStore store = init_weights(stage2_param_specs(cfg, prefix), seed, mode);
  if (tie) tie_stereo_views(store, cfg, prefix);
  return store;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"htcan: multi-stage stereo image super-resolution"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0: runtime default)")->check(CLI::NonNegativeNumber);

  // sr
  auto* sr = app.add_subcommand("sr", "super-resolve one stereo pair");
  std::string sr_left, sr_right, sr_out_left, sr_out_right, sr_config, sr_stages;
  bool sr_no_se = false, sr_trace = false;
  sr->add_option("--left", sr_left)->required();
  sr->add_option("--right", sr_right)->required();
  sr->add_option("--out-left", sr_out_left)->required();
  sr->add_option("--out-right", sr_out_right)->required();
  sr->add_option("--config", sr_config)->required();
  sr->add_flag("--no-self-ensemble", sr_no_se);
  sr->add_option("--stages", sr_stages, "1, 12 or 123 (default: every configured stage)");
  sr->add_flag("--trace", sr_trace, "print the dataflow table");

  // degrade
  auto* degrade = app.add_subcommand("degrade", "bicubic downsampling of every PNG in a directory");
  std::string dg_in, dg_out;
  int dg_scale = 4;
  degrade->add_option("--in-dir", dg_in)->required();
  degrade->add_option("--out-dir", dg_out)->required();
  degrade->add_option("--scale", dg_scale)->check(CLI::PositiveNumber);

  // eval
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM of <name>_L/_R.png pairs against ground truth");
  std::string ev_sr, ev_gt, ev_report, ev_psnr = "joint", ev_ssim = "luma";
  int ev_crop = 64;
  eval->add_option("--sr-dir", ev_sr)->required();
  eval->add_option("--gt-dir", ev_gt)->required();
  eval->add_option("--report", ev_report);
  eval->add_option("--crop-left", ev_crop)->check(CLI::NonNegativeNumber);
  eval->add_option("--psnr-mode", ev_psnr)->check(CLI::IsMember({"joint", "channel_mean"}));
  eval->add_option("--ssim-mode", ev_ssim)->check(CLI::IsMember({"luma", "rgb_mean"}));

  // init-weights
  auto* initw = app.add_subcommand("init-weights", "deterministic weight initialization");
  std::string iw_config, iw_out, iw_mode = "standard";
  std::uint64_t iw_seed = 0;
  int iw_stage = 1, iw_member = 0;
  bool iw_tie = false;
  initw->add_option("--config", iw_config)->required();
  initw->add_option("--seed", iw_seed)->required();
  initw->add_option("--out", iw_out)->required();
  initw->add_option("--stage", iw_stage)->check(CLI::Range(1, 3));
  initw->add_option("--member", iw_member, "stage-1 member index")->check(CLI::NonNegativeNumber);
  initw->add_option("--mode", iw_mode)->check(CLI::IsMember({"standard", "default", "random"}));
  initw->add_flag("--tie-views", iw_tie, "copy left-view SCAM parameters to the right view");

  // train-toy
  auto* train = app.add_subcommand("train-toy", "train one stage on synthetic stereo pairs");
  std::string tt_config, tt_out, tt_s1, tt_s2, tt_trace;
  int tt_stage = 1, tt_iters = -1;
  std::uint64_t tt_seed = 0;
  bool tt_seed_given = false;
  train->add_option("--stage", tt_stage)->required()->check(CLI::Range(1, 3));
  train->add_option("--config", tt_config);
  train->add_option("--iters", tt_iters)->check(CLI::NonNegativeNumber);
  auto* seed_opt = train->add_option("--seed", tt_seed);
  train->add_option("--out", tt_out)->required();
  train->add_option("--stage1-weights", tt_s1);
  train->add_option("--stage2-weights", tt_s2);
  train->add_option("--trace", tt_trace, "loss trace CSV");

  // ensemble
  auto* ens = app.add_subcommand("ensemble", "weighted mean of PNG predictions");
  std::vector<std::string> en_inputs, en_weights;
  std::string en_out;
  ens->add_option("--inputs", en_inputs)->required();
  ens->add_option("--weights", en_weights)->required();
  ens->add_option("--out", en_out)->required();

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  std::uint64_t gc_seed = 0;
  grad->add_option("--seed", gc_seed);

  auto* self = app.add_subcommand("selftest", "kernels against scalar-loop oracles");
  std::uint64_t st_seed = 1;
  self->add_option("--seed", st_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }
  tt_seed_given = seed_opt->count() > 0;

  try {
    if (threads > 0) set_num_threads(threads);

    if (*sr) {
      PipelineConfig cfg = load_pipeline_config(sr_config);
      if (threads > 0) cfg.threads = threads;
      RunOptions opts;
      opts.self_ensemble = !sr_no_se;
      opts.max_stage = !sr_stages.empty()    ? stages_from_flag(sr_stages)
                       : !cfg.stage2.enabled ? 1
                       : cfg.stage3.enabled  ? 3
                                             : 2;
      const auto trace = run_pipeline_files(sr_left, sr_right, sr_out_left, sr_out_right, cfg, opts);
      if (sr_trace) std::cout << format_dataflow(trace);
      return 0;
    }

    if (*degrade) {
      fs::create_directories(dg_out);
      const auto files = pngs_in(dg_in);
      for (const auto& f : files) {
        const Tensor<double> hr = modcrop(read_png<double>(f), dg_scale);
        write_png(fs::path(dg_out) / f.filename(), bicubic_downsample(hr, dg_scale));
      }
      std::cout << "degraded " << files.size() << " images by x" << dg_scale << "\n";
      return 0;
    }

    if (*eval) {
      EvalOptions opts;
      opts.crop_left = ev_crop;
      opts.psnr_mode = ev_psnr == "joint" ? PsnrMode::joint : PsnrMode::channel_mean;
      opts.ssim_mode = ev_ssim == "luma" ? SsimMode::luma : SsimMode::rgb_mean;
      const EvalReport report = evaluate_protocol(read_pairs(ev_sr), read_pairs(ev_gt), opts);
      std::cout << report.table();
      if (!ev_report.empty()) write_text(ev_report, report.csv());
      return 0;
    }

    if (*initw) {
      const std::string text = read_text_file(iw_config);
      const InitMode mode = iw_mode == "random" ? InitMode::random : InitMode::standard;
      const WeightStore store = init_store(text, iw_stage, iw_member, iw_seed, mode, iw_tie);
      store.save(iw_out);
      std::cout << "wrote " << store.size() << " tensors to " << iw_out << "\n";
      return 0;
    }

    if (*train) {
      ToyTrainConfig cfg = tt_config.empty() ? ToyTrainConfig{} : load_toy_config(tt_config);
      TrainConfig& tc = cfg.train(tt_stage);
      if (tt_iters >= 0) {
        if (tc.schedule.total_iters == tc.iters) tc.schedule.total_iters = std::max(1, tt_iters);
        if (tc.mse_from >= tc.iters) tc.mse_from = -1;
        tc.iters = tt_iters;
      }
      if (tt_seed_given) tc.seed = tt_seed;
      ToySetup setup;
      setup.stage1 = cfg.stage1;
      setup.stage2 = cfg.stage2;
      if (!tt_s1.empty()) setup.stage1_weights = WeightStore::load(tt_s1);
      if (!tt_s2.empty()) setup.stage2_weights = WeightStore::load(tt_s2);
      const TrainResult r = train_toy(tt_stage, setup, tc);
      r.weights.save(tt_out);
      if (!tt_trace.empty()) write_text(tt_trace, r.trace.csv());
      if (!r.trace.rows.empty()) {
        std::printf("stage %d: %d iterations, smoothed loss %.6f -> %.6f\n", tt_stage, tc.iters,
                    r.trace.smoothed_initial(tc.smooth_window), r.trace.smoothed_final(tc.smooth_window));
      }
      return 0;
    }

    if (*ens) {
      if (en_inputs.size() != en_weights.size()) {
        throw UsageError("ensemble: " + std::to_string(en_inputs.size()) + " inputs but " +
                         std::to_string(en_weights.size()) + " weights");
      }
      std::vector<Tensor<double>> preds;
      std::vector<double> weights;
      for (std::size_t i = 0; i < en_inputs.size(); ++i) {
        preds.push_back(read_png<double>(en_inputs[i]));
        weights.push_back(parse_weight(en_weights[i]));
      }
      write_png(en_out, model_ensemble<double>(preds, weights));
      return 0;
    }

    if (*grad) {
      const auto results = verify::gradcheck_suite(gc_seed);
      std::cout << verify::format_gradcheck_table(results);
      const bool ok = std::all_of(results.begin(), results.end(), [](const auto& r) { return r.pass; });
      return ok ? 0 : 1;
    }

    if (*self) {
      const auto checks = verify::run_selftest(st_seed);
      std::cout << verify::format_selftest_table(checks);
      const bool ok = std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
      return ok ? 0 : 1;
    }
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const LoadError& e) {
    std::cerr << "load error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
