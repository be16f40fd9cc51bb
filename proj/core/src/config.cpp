// Copyright 2026 The claip-emo Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "claip/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "claip/error.hpp"

namespace claip {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view expected, std::string_view value) {
  throw ConfigError(fmt::format("key '{}': expected {}, got '{}'", key, expected, value));
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || v.empty()) bad_value(key, "a non-negative integer", v);
  return out;
}

std::size_t parse_size(std::string_view key, std::string_view v) { return static_cast<std::size_t>(parse_u64(key, v)); }

int parse_int(std::string_view key, std::string_view v) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || v.empty()) bad_value(key, "an integer", v);
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    bad_value(key, "a number", v);
  }
  if (used != s.size()) bad_value(key, "a number", v);
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, "a boolean (true/false)", v);
}

std::vector<std::size_t> parse_list(std::string_view key, std::string_view v) {
  std::vector<std::size_t> out;
  std::string item;
  std::istringstream is{std::string(v)};
  while (std::getline(is, item, ',')) {
    const std::string t = trim(item);
    if (!t.empty()) out.push_back(parse_size(key, t));
  }
  return out;
}

std::string show(double v) { return fmt::format("{}", v); }
std::string show(bool v) { return v ? "true" : "false"; }

struct Entry {
  std::string key;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define CLAIP_SIZE(k, field) \
  Entry{k, [](RunConfig& c, std::string_view key, std::string_view v) { c.field = parse_size(key, v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }}
#define CLAIP_U64(k, field) \
  Entry{k, [](RunConfig& c, std::string_view key, std::string_view v) { c.field = parse_u64(key, v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }}
#define CLAIP_DOUBLE(k, field) \
  Entry{k, [](RunConfig& c, std::string_view key, std::string_view v) { c.field = parse_double(key, v); }, \
        [](const RunConfig& c) { return show(c.field); }}
#define CLAIP_BOOL(k, field) \
  Entry{k, [](RunConfig& c, std::string_view key, std::string_view v) { c.field = parse_bool(key, v); }, \
        [](const RunConfig& c) { return show(c.field); }}

void reseed(RunConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.data.seed = seed;
  c.fold_seed = seed;
  c.model.init_seed = seed;
  c.train.seed = seed;
}

void apply_backbone_size(EncoderConfig& e, std::string_view key, std::string_view v) {
  if (v.size() != 1) bad_value(key, "B or L", v);
  const EncoderConfig p = visual_preset(v[0]);
  e.depth = p.depth;
  e.d_model = p.d_model;
  e.n_heads = p.n_heads;
  e.mlp_ratio = p.mlp_ratio;
}

const std::vector<Entry>& schema() {
  static const std::vector<Entry> entries = {
      Entry{"run.preset", [](RunConfig& c, std::string_view, std::string_view v) { c.preset = std::string(v); },
            [](const RunConfig& c) { return c.preset; }},
      Entry{"run.seed", [](RunConfig& c, std::string_view k, std::string_view v) { reseed(c, parse_u64(k, v)); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      Entry{"run.out", [](RunConfig& c, std::string_view, std::string_view v) { c.out = std::string(v); },
            [](const RunConfig& c) { return c.out.string(); }},
      CLAIP_SIZE("run.threads", threads),

      CLAIP_SIZE("data.classes", data.classes),
      CLAIP_SIZE("data.clips_per_class", data.clips_per_class),
      Entry{"data.class_counts",
            [](RunConfig& c, std::string_view k, std::string_view v) { c.data.class_counts = parse_list(k, v); },
            [](const RunConfig& c) { return fmt::format("{}", fmt::join(c.data.class_counts, ",")); }},
      CLAIP_DOUBLE("data.sigma_v", data.sigma_v),
      CLAIP_DOUBLE("data.sigma_a", data.sigma_a),
      CLAIP_DOUBLE("data.rho", data.rho),
      CLAIP_BOOL("data.temporal_order", data.temporal_order),
      CLAIP_U64("data.seed", data.seed),
      CLAIP_SIZE("data.frames", data.frames),
      CLAIP_SIZE("data.height", data.height),
      CLAIP_SIZE("data.width", data.width),
      CLAIP_SIZE("data.channels", data.channels),
      CLAIP_SIZE("data.tile", data.tile),
      CLAIP_SIZE("data.audio_samples", data.audio_samples),
      CLAIP_DOUBLE("data.tone_amplitude", data.tone_amplitude),
      CLAIP_SIZE("data.folds", folds),
      CLAIP_U64("data.fold_seed", fold_seed),

      Entry{"audio.sample_rate",
            [](RunConfig& c, std::string_view k, std::string_view v) { c.data.sample_rate = parse_int(k, v); },
            [](const RunConfig& c) { return std::to_string(c.data.sample_rate); }},
      CLAIP_SIZE("audio.window", model.frontend.window),
      CLAIP_SIZE("audio.hop", model.frontend.hop),
      CLAIP_SIZE("audio.n_fft", model.frontend.n_fft),
      CLAIP_SIZE("audio.n_mels", model.frontend.n_mels),
      CLAIP_DOUBLE("audio.f_min", model.frontend.f_min),
      CLAIP_DOUBLE("audio.f_max", model.frontend.f_max),

      Entry{"visual_encoder.preset",
            [](RunConfig& c, std::string_view k, std::string_view v) { apply_backbone_size(c.model.visual, k, v); },
            [](const RunConfig&) { return std::string("B"); }},
      CLAIP_SIZE("visual_encoder.depth", model.visual.depth),
      CLAIP_SIZE("visual_encoder.d_model", model.visual.d_model),
      CLAIP_SIZE("visual_encoder.n_heads", model.visual.n_heads),
      CLAIP_SIZE("visual_encoder.mlp_ratio", model.visual.mlp_ratio),
      Entry{"visual_encoder.patch",
            [](RunConfig& c, std::string_view k, std::string_view v) {
              c.model.visual.patch_h = c.model.visual.patch_w = parse_size(k, v);
            },
            [](const RunConfig& c) { return std::to_string(c.model.visual.patch_h); }},
      CLAIP_DOUBLE("visual_encoder.embed_std", model.visual.embed_std),
      CLAIP_BOOL("visual_encoder.use_pos", model.visual.use_pos),

      Entry{"audio_encoder.preset",
            [](RunConfig& c, std::string_view k, std::string_view v) { apply_backbone_size(c.model.audio, k, v); },
            [](const RunConfig&) { return std::string("B"); }},
      CLAIP_SIZE("audio_encoder.depth", model.audio.depth),
      CLAIP_SIZE("audio_encoder.d_model", model.audio.d_model),
      CLAIP_SIZE("audio_encoder.n_heads", model.audio.n_heads),
      CLAIP_SIZE("audio_encoder.mlp_ratio", model.audio.mlp_ratio),
      CLAIP_SIZE("audio_encoder.patch_frames", audio_patch_frames),
      CLAIP_DOUBLE("audio_encoder.embed_std", model.audio.embed_std),
      CLAIP_BOOL("audio_encoder.use_pos", model.audio.use_pos),

      CLAIP_SIZE("lora.rank", model.lora_rank),
      CLAIP_DOUBLE("lora.alpha", model.lora_alpha),
      CLAIP_DOUBLE("lora.dropout", model.lora_dropout),
      CLAIP_BOOL("lora.full_finetune", model.full_finetune),

      CLAIP_SIZE("clip.frames", model.frames),
      Entry{"agg.visual",
            [](RunConfig& c, std::string_view, std::string_view v) { c.model.agg_visual = parse_aggregation(v); },
            [](const RunConfig& c) { return to_string(c.model.agg_visual); }},
      Entry{"agg.audio",
            [](RunConfig& c, std::string_view, std::string_view v) { c.model.agg_audio = parse_aggregation(v); },
            [](const RunConfig& c) { return to_string(c.model.agg_audio); }},
      Entry{"fusion", [](RunConfig& c, std::string_view, std::string_view v) { c.model.fusion = parse_fusion(v); },
            [](const RunConfig& c) { return to_string(c.model.fusion); }},
      Entry{"modality",
            [](RunConfig& c, std::string_view, std::string_view v) { c.model.modality = parse_modality(v); },
            [](const RunConfig& c) { return to_string(c.model.modality); }},
      CLAIP_U64("model.backbone_seed", model.backbone_seed),
      CLAIP_U64("model.init_seed", model.init_seed),

      CLAIP_SIZE("train.epochs", train.epochs),
      CLAIP_SIZE("train.batch_size", train.batch_size),
      CLAIP_DOUBLE("train.lr_peak", train.lr_peak),
      CLAIP_DOUBLE("train.lr_min", train.lr_min),
      Entry{"train.warmup_epochs",
            [](RunConfig& c, std::string_view k, std::string_view v) {
              if (v == "auto") {
                c.train.warmup_epochs.reset();
              } else {
                c.train.warmup_epochs = parse_size(k, v);
              }
            },
            [](const RunConfig& c) {
              return c.train.warmup_epochs ? std::to_string(*c.train.warmup_epochs) : std::string("auto");
            }},
      CLAIP_U64("train.seed", train.seed),
      CLAIP_DOUBLE("train.beta1", train.adam.beta1),
      CLAIP_DOUBLE("train.beta2", train.adam.beta2),
      CLAIP_DOUBLE("train.eps", train.adam.eps),
      CLAIP_DOUBLE("train.grad_clip", train.grad_clip),
      CLAIP_BOOL("train.verify_frozen", train.verify_frozen),

      Entry{"eval.constant_class",
            [](RunConfig& c, std::string_view k, std::string_view v) { c.constant_class = parse_int(k, v); },
            [](const RunConfig& c) { return std::to_string(c.constant_class); }},
  };
  return entries;
}

#undef CLAIP_SIZE
#undef CLAIP_U64
#undef CLAIP_DOUBLE
#undef CLAIP_BOOL

const Entry& find_entry(std::string_view key) {
  const auto& s = schema();
  const auto it = std::find_if(s.begin(), s.end(), [key](const Entry& e) { return e.key == key; });
  if (it != s.end()) return *it;
  const auto best = std::min_element(s.begin(), s.end(), [key](const Entry& a, const Entry& b) {
    return edit_distance(key, a.key) < edit_distance(key, b.key);
  });
  throw ConfigError(fmt::format("unknown key '{}' (did you mean '{}'?)", key, best->key));
}

std::pair<std::string, std::string> split_override(std::string_view kv) {
  const auto eq = kv.find('=');
  if (eq == std::string_view::npos) throw ConfigError(fmt::format("override '{}' must look like section.name=value", kv));
  return {trim(kv.substr(0, eq)), trim(kv.substr(eq + 1))};
}

}  // namespace

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& e : schema()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

void set_key(RunConfig& cfg, std::string_view key, std::string_view value) {
  if (key == "run.preset") {
    const RunConfig fresh = preset_config(value);
    const auto out = cfg.out;
    const auto threads = cfg.threads;
    cfg = fresh;
    cfg.out = out;
    cfg.threads = threads;
    return;
  }
  find_entry(key).set(cfg, key, value);
}

std::string get_key(const RunConfig& cfg, std::string_view key) { return find_entry(key).get(cfg); }

RunConfig preset_config(std::string_view name) {
  RunConfig c;
  c.preset = std::string(name);
  c.data.audio_samples = 16000;
  c.model.visual = visual_preset('B');
  c.model.audio = audio_preset();
  if (name == "desk") return c;
  if (name == "large") {
    c.model.visual = visual_preset('L');
    apply_backbone_size(c.model.audio, "run.preset", "L");
    return c;
  }
  if (name == "tiny") {
    c.data.frames = 4;
    c.data.audio_samples = 8000;
    c.model.frames = 4;
    c.model.frontend.n_mels = 32;
    for (EncoderConfig* e : {&c.model.visual, &c.model.audio}) {
      e->depth = 1;
      e->d_model = 48;
      e->n_heads = 2;
      e->mlp_ratio = 2;
    }
    c.train.lr_peak = 1e-3;
    return c;
  }
  throw ConfigError(fmt::format("unknown preset '{}' (expected desk, tiny or large)", name));
}

void RunConfig::resolve() {
  data.validate();
  if (threads == 0) threads = 1;
  model.classes = data.classes;
  model.frontend.sample_rate = data.sample_rate;
  model.visual.kind = EncoderKind::Visual;
  model.visual.input_h = data.height;
  model.visual.input_w = data.width;
  model.visual.channels = data.channels;
  model.audio.kind = EncoderKind::Audio;
  model.audio.input_h = audio::frame_count(data.audio_samples, model.frontend.window, model.frontend.hop);
  model.audio.input_w = model.frontend.n_mels;
  model.audio.channels = 1;
  model.audio.patch_h = audio_patch_frames;
  model.audio.patch_w = model.frontend.n_mels;
  if (model.frames > data.frames) {
    throw ConfigError(fmt::format("clip.frames {} exceeds the {} frames per clip in data.frames", model.frames,
                                  data.frames));
  }
  if (folds < 2) throw ConfigError(fmt::format("data.folds must be >= 2, got {}", folds));
  if (constant_class >= static_cast<int>(data.classes)) {
    throw ConfigError(fmt::format("eval.constant_class {} outside [0, {})", constant_class, data.classes));
  }
  model.validate();
  train.validate();
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
  // A preset resets everything, so it goes first regardless of position.
  for (const auto& o : overrides) {
    const auto [k, v] = split_override(o);
    if (k == "run.preset") set_key(cfg, k, v);
  }
  for (const auto& o : overrides) {
    const auto [k, v] = split_override(o);
    if (k != "run.preset") set_key(cfg, k, v);
  }
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("cannot parse config '{}': {}", path.string(), e.what()));
  }
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      // A key before the first header is global; an empty header contributes nothing.
      if (!body.data().empty()) entries.emplace_back(section, trim(body.data()));
      continue;
    }
    for (const auto& [name, value] : body) entries.emplace_back(section + "." + name, trim(value.data()));
  }
  RunConfig cfg = preset_config("desk");
  for (const auto& [k, v] : entries) {
    if (k == "run.preset") set_key(cfg, k, v);
  }
  for (const auto& [k, v] : entries) {
    if (k == "run.seed") set_key(cfg, k, v);
  }
  for (const auto& [k, v] : entries) {
    if (k != "run.preset" && k != "run.seed") set_key(cfg, k, v);
  }
  apply_overrides(cfg, overrides);
  return cfg;
}

std::string serialize(const RunConfig& cfg) {
  std::string out = fmt::format("; claip-emo {} resolved configuration\n; seed {}\n", kVersion, cfg.seed);
  for (const auto& e : schema()) {
    if (e.key.find('.') == std::string::npos) out += fmt::format("{} = {}\n", e.key, e.get(cfg));
  }
  std::string section;
  for (const auto& e : schema()) {
    if (e.key == "visual_encoder.preset" || e.key == "audio_encoder.preset") continue;  // expanded into depth/width keys
    const auto dot = e.key.find('.');
    if (dot == std::string::npos) continue;
    const std::string sec = e.key.substr(0, dot);
    if (sec != section) {
      out += fmt::format("\n[{}]\n", sec);
      section = sec;
    }
    out += fmt::format("{} = {}\n", e.key.substr(dot + 1), e.get(cfg));
  }
  return out;
}

void write_run_record(const RunConfig& cfg, const std::filesystem::path& dir, std::string_view command) {
  std::filesystem::create_directories(dir);
  std::ofstream c(dir / "run.cfg");
  c << serialize(cfg);
  std::ofstream s(dir / "stamp.json");
  s << nlohmann::json{{"version", kVersion},
                      {"command", command},
                      {"seed", cfg.seed},
                      {"threads", cfg.threads},
                      {"precision", "f32"}}
           .dump(2)
    << '\n';
  if (!c || !s) throw IoError(fmt::format("failed writing the run record under '{}'", dir.string()));
}

}  // namespace claip
