#include "htcan/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "htcan/ensemble.hpp"

namespace htcan {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Typed access to one JSON object that remembers which keys were read, so
// leftovers can be reported as unknown fields.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "document" : path_, "expected an object");
  }

  const std::string& path() const { return path_; }
  bool has(const char* key) const { return j_.contains(key); }

  const json* raw(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::optional<Obj> object(const char* key) {
    const json* v = raw(key);
    if (v == nullptr) return std::nullopt;
    return Obj(*v, join(path_, key));
  }

  void get(const char* key, bool& out) {
    if (const json* v = raw(key)) {
      if (!v->is_boolean()) fail(join(path_, key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, int& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number_integer()) fail(join(path_, key), "expected an integer");
      const auto x = v->get<std::int64_t>();
      if (x < INT32_MIN || x > INT32_MAX) fail(join(path_, key), "integer out of range");
      out = static_cast<int>(x);
    }
  }
  void get(const char* key, std::int64_t& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number_integer()) fail(join(path_, key), "expected an integer");
      out = v->get<std::int64_t>();
    }
  }
  void get(const char* key, std::uint64_t& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number_integer() || v->get<std::int64_t>() < 0) {
        fail(join(path_, key), "expected a non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }
  void get(const char* key, double& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number()) fail(join(path_, key), "expected a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = raw(key)) {
      if (!v->is_string()) fail(join(path_, key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, std::vector<std::int64_t>& out) {
    if (const json* v = raw(key)) {
      if (!v->is_array()) fail(join(path_, key), "expected an array of integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer()) fail(join(path_, key), "expected an array of integers");
        out.push_back(e.get<std::int64_t>());
      }
    }
  }
  /// A number or an exact rational string such as "1/7".
  void get_weight(const char* key, double& out) {
    if (const json* v = raw(key)) {
      if (v->is_number()) {
        out = v->get<double>();
      } else if (v->is_string()) {
        try {
          out = parse_weight(v->get<std::string>());
        } catch (const UsageError& e) {
          fail(join(path_, key), e.what());
        }
      } else {
        fail(join(path_, key), "expected a number or a fraction string");
      }
    }
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) fail(join(path_, key), "unknown field");
    }
  }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw ConfigError(where + ": " + what);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string msg = e.what();
    if (const auto pos = msg.find("syntax error"); pos != std::string::npos) msg = msg.substr(pos);
    throw ConfigError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + msg);
  }
}

template <typename Cfg>
void validated(const Cfg& cfg, const std::string& path) {
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void read_stage1(Obj o, Stage1Config& c) {
  o.get("image_channels", c.image_channels);
  o.get("channels", c.channels);
  o.get("groups", c.groups);
  o.get("blocks_per_group", c.blocks_per_group);
  o.get("heads", c.heads);
  o.get("window", c.window);
  o.get("scale", c.scale);
  std::string act;
  o.get("activation", act);
  if (!act.empty()) {
    try {
      c.activation = parse_activation(act);
    } catch (const ConfigError& e) {
      Obj::fail(join(o.path(), "activation"), e.what());
    }
  }
  o.get("patch", c.patch);
  o.get("ca_reduction", c.ca_reduction);
  o.get("mlp_ratio", c.mlp_ratio);
  o.get("overlap_ratio", c.overlap_ratio);
  o.get("shift", c.shift);
  o.get("norm_eps", c.norm_eps);
  o.finish();
  validated(c, o.path());
}

void read_stage2(Obj o, Stage2Config& c) {
  o.get("image_channels", c.image_channels);
  o.get("channels", c.channels);
  o.get("blocks", c.blocks);
  o.get("unshuffle", c.unshuffle);
  o.get("scam_every", c.scam_every);
  o.get("dw_expansion", c.dw_expansion);
  o.get("ffn_expansion", c.ffn_expansion);
  o.get("norm_eps", c.norm_eps);
  o.finish();
  validated(c, o.path());
}

void read_data(Obj o, ToyDataConfig& d) {
  o.get("pairs", d.pairs);
  o.get("hr_height", d.hr_height);
  o.get("hr_width", d.hr_width);
  o.get("scale", d.scale);
  o.get("max_disparity", d.max_disparity);
  o.get("seed", d.seed);
  o.finish();
  if (d.pairs < 1) Obj::fail(join(o.path(), "pairs"), "must be >= 1");
  if (d.scale < 1) Obj::fail(join(o.path(), "scale"), "must be >= 1");
  if (d.hr_height < 1 || d.hr_height % d.scale != 0) {
    Obj::fail(join(o.path(), "hr_height"), "must be a positive multiple of scale");
  }
  if (d.hr_width < 1 || d.hr_width % d.scale != 0) {
    Obj::fail(join(o.path(), "hr_width"), "must be a positive multiple of scale");
  }
  if (d.max_disparity < 0) Obj::fail(join(o.path(), "max_disparity"), "must be >= 0");
}

void read_train(Obj o, TrainConfig& t) {
  o.get("iters", t.iters);
  o.get("batch", t.batch);
  o.get("seed", t.seed);
  if (auto opt = o.object("optimizer")) {
    std::string kind;
    opt->get("kind", kind);
    if (kind == "adam") {
      t.optim.kind = OptimKind::adam;
    } else if (kind == "adamw") {
      t.optim.kind = OptimKind::adamw;
    } else if (!kind.empty()) {
      Obj::fail(join(opt->path(), "kind"), "expected \"adam\" or \"adamw\", got \"" + kind + "\"");
    }
    opt->get("beta1", t.optim.beta1);
    opt->get("beta2", t.optim.beta2);
    opt->get("weight_decay", t.optim.weight_decay);
    opt->get("eps", t.optim.eps);
    opt->finish();
  }
  bool total_given = false;
  if (auto s = o.object("schedule")) {
    std::string kind;
    s->get("kind", kind);
    if (kind == "multistep_half") {
      t.schedule.kind = LrKind::multistep_half;
    } else if (kind == "cosine") {
      t.schedule.kind = LrKind::cosine;
    } else if (!kind.empty()) {
      Obj::fail(join(s->path(), "kind"),
                "expected \"multistep_half\" or \"cosine\", got \"" + kind + "\"");
    }
    s->get("init_lr", t.schedule.init_lr);
    s->get("milestones", t.schedule.milestones);
    total_given = s->has("total_iters");
    s->get("total_iters", t.schedule.total_iters);
    s->get("min_lr", t.schedule.min_lr);
    s->finish();
  }
  if (!total_given) t.schedule.total_iters = t.iters;
  if (auto a = o.object("augment")) {
    a->get("channel_shuffle", t.augment.channel_shuffle);
    a->get("hflip", t.augment.hflip);
    a->get("vflip", t.augment.vflip);
    a->get("rotation", t.augment.rotation);
    a->get("mixup", t.augment.mixup);
    a->get("mixup_alpha", t.augment.mixup_alpha);
    a->finish();
  }
  o.get("mse_from", t.mse_from);
  o.get("charbonnier_eps", t.charbonnier_eps);
  o.get("crop_h", t.crop_h);
  o.get("crop_w", t.crop_w);
  o.get("fixed_batch", t.fixed_batch);
  o.get("grad_clip", t.grad_clip);
  o.get("smooth_window", t.smooth_window);
  o.get("self_ensemble_inputs", t.self_ensemble_inputs);
  o.finish();
  validated(t, o.path());
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void read_stereo_stage(Obj o, StereoStageSettings& s, const fs::path& base, bool config_required) {
  o.get("enabled", s.enabled);
  if (auto c = o.object("config")) {
    read_stage2(*c, s.config);
  } else if (config_required) {
    Obj::fail(join(o.path(), "config"), "missing");
  }
  std::string w;
  o.get("weights", w);
  if (w.empty() && s.enabled) Obj::fail(join(o.path(), "weights"), "missing");
  if (!w.empty()) s.weights = resolve(base, w);
  o.get("self_ensemble", s.self_ensemble);
  o.finish();
}

PipelineConfig read_pipeline(const json& doc, const fs::path& base) {
  PipelineConfig cfg;
  Obj root(doc, "");
  std::string precision = "float32";
  root.get("precision", precision);
  if (precision == "float32") {
    cfg.precision = Precision::float32;
  } else if (precision == "float64") {
    cfg.precision = Precision::float64;
  } else {
    Obj::fail("precision", "expected \"float32\" or \"float64\", got \"" + precision + "\"");
  }
  root.get("threads", cfg.threads);
  if (cfg.threads < 0) Obj::fail("threads", "must be >= 0");

  auto s1 = root.object("stage1");
  if (!s1) Obj::fail("stage1", "missing");
  Stage1Config base1;
  if (auto c = s1->object("config")) read_stage1(*c, base1);
  s1->get("self_ensemble", cfg.stage1.self_ensemble);
  if (auto t = s1->object("tiling")) {
    t->get("patch", cfg.stage1.tiling.patch);
    t->get("batch", cfg.stage1.tiling.batch);
    t->finish();
    if (cfg.stage1.tiling.patch < 0) Obj::fail("stage1.tiling.patch", "must be >= 0");
    if (cfg.stage1.tiling.batch < 1) Obj::fail("stage1.tiling.batch", "must be >= 1");
  }
  const json* members = s1->raw("members");
  if (members == nullptr || !members->is_array() || members->empty()) {
    Obj::fail("stage1.members", "expected a non-empty array");
  }
  for (std::size_t i = 0; i < members->size(); ++i) {
    Obj m((*members)[i], "stage1.members[" + std::to_string(i) + "]");
    Stage1Member member;
    member.config = base1;
    member.name = "member" + std::to_string(i);
    m.get("name", member.name);
    std::string w;
    m.get("weights", w);
    if (w.empty()) Obj::fail(join(m.path(), "weights"), "missing");
    member.weights = resolve(base, w);
    member.weight = members->size() == 1 ? 1.0 : -1.0;
    m.get_weight("weight", member.weight);
    if (member.weight < 0.0) Obj::fail(join(m.path(), "weight"), "missing or negative");
    if (auto c = m.object("config")) read_stage1(*c, member.config);
    m.finish();
    cfg.stage1.members.push_back(std::move(member));
  }
  s1->finish();

  cfg.stage2.enabled = false;
  cfg.stage3.enabled = false;
  cfg.stage3.self_ensemble = false;
  if (auto s2 = root.object("stage2")) {
    cfg.stage2.enabled = true;
    read_stereo_stage(*s2, cfg.stage2, base, true);
  }
  if (auto s3 = root.object("stage3")) {
    cfg.stage3.enabled = true;
    cfg.stage3.config = cfg.stage2.config;
    read_stereo_stage(*s3, cfg.stage3, base, false);
  }
  if (auto fe = root.object("final_ensemble")) {
    fe->get_weight("stage2", cfg.stage2_weight);
    fe->get_weight("stage3", cfg.stage3_weight);
    fe->finish();
  }
  root.finish();
  cfg.validate();
  return cfg;
}

}  // namespace

void PipelineConfig::validate() const {
  if (stage1.members.empty()) throw ConfigError("stage1.members: at least one member is required");
  EnsembleSpec spec;
  for (const auto& m : stage1.members) spec.members.push_back({m.name, m.weight});
  try {
    spec.validate();
  } catch (const UsageError& e) {
    throw ConfigError(std::string("stage1.members: ") + e.what());
  }
  const Stage1Config& first = stage1.members.front().config;
  for (std::size_t i = 0; i < stage1.members.size(); ++i) {
    const Stage1Config& c = stage1.members[i].config;
    validated(c, "stage1.members[" + std::to_string(i) + "].config");
    if (c.scale != first.scale || c.image_channels != first.image_channels) {
      throw ConfigError("stage1.members[" + std::to_string(i) +
                        "].config: scale and image_channels must match the first member");
    }
  }
  for (const auto* s : {&stage2, &stage3}) {
    if (!s->enabled) continue;
    const char* name = s == &stage2 ? "stage2" : "stage3";
    validated(s->config, std::string(name) + ".config");
    if (s->config.image_channels != first.image_channels) {
      throw ConfigError(std::string(name) + ".config.image_channels must match stage 1");
    }
  }
  if (stage3.enabled && !stage2.enabled) throw ConfigError("stage3: requires stage2");
  if (stage3.enabled) {
    EnsembleSpec fe{{{"stage2", stage2_weight}, {"stage3", stage3_weight}}};
    try {
      fe.validate();
    } catch (const UsageError& e) {
      throw ConfigError(std::string("final_ensemble: ") + e.what());
    }
  }
  if (threads < 0) throw ConfigError("threads: must be >= 0");
}

void PipelineConfig::check_files() const {
  auto need = [](const fs::path& p, const std::string& field) {
    if (!fs::is_regular_file(p)) throw IoError(field + ": weight file not found: " + p.string());
  };
  for (std::size_t i = 0; i < stage1.members.size(); ++i) {
    need(stage1.members[i].weights, "stage1.members[" + std::to_string(i) + "].weights");
  }
  if (stage2.enabled) need(stage2.weights, "stage2.weights");
  if (stage3.enabled) need(stage3.weights, "stage3.weights");
}

std::string read_text_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + file.string());
  return os.str();
}

PipelineConfig parse_pipeline_config(std::string_view text, const fs::path& base_dir) {
  return read_pipeline(parse_json(text), base_dir);
}

PipelineConfig load_pipeline_config(const fs::path& file) {
  const std::string text = read_text_file(file);
  try {
    return parse_pipeline_config(text, file.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

const TrainConfig& ToyTrainConfig::train(int stage) const {
  if (stage == 1) return train1;
  if (stage == 2) return train2;
  if (stage == 3) return train3;
  throw UsageError("stage must be 1, 2 or 3");
}

TrainConfig& ToyTrainConfig::train(int stage) {
  return const_cast<TrainConfig&>(std::as_const(*this).train(stage));
}

ToyTrainConfig parse_toy_config(std::string_view text) {
  const json doc = parse_json(text);
  Obj root(doc, "");
  ToyTrainConfig cfg;
  ToyDataConfig data;
  if (auto d = root.object("data")) read_data(*d, data);
  for (int stage = 1; stage <= 3; ++stage) {
    const std::string key = "stage" + std::to_string(stage);
    auto s = root.object(key.c_str());
    if (!s) continue;
    if (stage == 1) {
      if (auto c = s->object("config")) read_stage1(*c, cfg.stage1);
    } else if (stage == 2) {
      if (auto c = s->object("config")) read_stage2(*c, cfg.stage2);
    }
    if (auto t = s->object("train")) read_train(*t, cfg.train(stage));
    s->finish();
  }
  root.finish();
  for (int stage = 1; stage <= 3; ++stage) {
    cfg.train(stage).data = data;
    if (cfg.train(stage).schedule.total_iters == 0) {
      cfg.train(stage).schedule.total_iters = cfg.train(stage).iters;
    }
  }
  if (cfg.stage1.scale != data.scale) {
    throw ConfigError("stage1.config.scale: " + std::to_string(cfg.stage1.scale) +
                      " differs from data.scale " + std::to_string(data.scale));
  }
  return cfg;
}

ToyTrainConfig load_toy_config(const fs::path& file) {
  const std::string text = read_text_file(file);
  try {
    return parse_toy_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

Stage1Config stage1_architecture(std::string_view text, int member) {
  const json doc = parse_json(text);
  if (doc.contains("stage1") && doc["stage1"].contains("members")) {
    const PipelineConfig cfg = read_pipeline(doc, ".");
    if (member < 0 || member >= static_cast<int>(cfg.stage1.members.size())) {
      throw ConfigError("stage1.members: no member " + std::to_string(member));
    }
    return cfg.stage1.members[static_cast<std::size_t>(member)].config;
  }
  return parse_toy_config(text).stage1;
}

Stage2Config stereo_architecture(std::string_view text, int stage) {
  if (stage != 2 && stage != 3) throw UsageError("stereo stage must be 2 or 3");
  const json doc = parse_json(text);
  if (doc.contains("stage1") && doc["stage1"].contains("members")) {
    const PipelineConfig cfg = read_pipeline(doc, ".");
    const StereoStageSettings& s = stage == 2 ? cfg.stage2 : cfg.stage3;
    if (!s.enabled) throw ConfigError("stage" + std::to_string(stage) + ": not configured");
    return s.config;
  }
  return parse_toy_config(text).stage2;
}

}  // namespace htcan
