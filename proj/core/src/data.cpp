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

#include "claip/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "claip/checkpoint.hpp"
#include "claip/error.hpp"
#include "claip/model.hpp"

namespace claip {

using nlohmann::json;

std::size_t DatasetSpec::total() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < classes; ++k) n += count(k);
  return n;
}

void DatasetSpec::validate() const {
  if (classes < 2) throw ConfigError(fmt::format("data.classes must be >= 2, got {}", classes));
  if (!class_counts.empty() && class_counts.size() != classes) {
    throw ConfigError(fmt::format("data.class_counts lists {} classes but data.classes is {}", class_counts.size(),
                                  classes));
  }
  if (!(sigma_v >= 0.0) || !(sigma_a >= 0.0)) throw ConfigError("noise levels must be non-negative");
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError(fmt::format("data.rho must lie in [0, 1], got {}", rho));
  if (frames == 0 || height == 0 || width == 0 || channels == 0) throw ConfigError("frame geometry must be positive");
  if (tile == 0 || height % tile != 0 || width % tile != 0) {
    throw ConfigError(fmt::format("data.tile {} must divide the {}x{} frame", tile, height, width));
  }
  if (temporal_order && frames < 2) throw ConfigError("temporal order needs at least 2 frames");
  if (sample_rate <= 0 || audio_samples == 0) throw ConfigError("audio geometry must be positive");
  const std::size_t patterns = temporal_order ? (classes + 1) / 2 : classes;
  const double top = 200.0 + 60.0 * static_cast<double>(patterns - 1) * 3.0;
  if (top >= sample_rate / 2.0) throw ConfigError("class tones exceed the Nyquist frequency");
}

namespace {

std::size_t pattern_index(const DatasetSpec& spec, std::size_t k) { return spec.temporal_order ? k / 2 : k; }

struct PatternBank {
  std::vector<std::vector<float>> patterns;  // per pattern index, [H, W, C]
};

PatternBank build_patterns(const DatasetSpec& spec) {
  const std::size_t gh = spec.height / spec.tile, gw = spec.width / spec.tile;
  const std::size_t cells = gh * gw;
  const std::size_t tile_len = spec.tile * spec.tile * spec.channels;
  std::mt19937_64 rng(derive_seed(spec.seed, 0x7a11));
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> tiles(cells * tile_len);
  for (float& v : tiles) v = u(rng);

  const std::size_t n_patterns = spec.temporal_order ? (spec.classes + 1) / 2 : spec.classes;
  // Distinct cells per pattern while the grid allows it.
  std::vector<std::size_t> cells_order(cells);
  std::iota(cells_order.begin(), cells_order.end(), 0);
  std::shuffle(cells_order.begin(), cells_order.end(), rng);
  PatternBank bank;
  for (std::size_t p = 0; p < n_patterns; ++p) {
    const std::size_t cell = cells_order[p % cells];
    std::vector<float> img(spec.height * spec.width * spec.channels, 0.5f);
    const std::size_t cy = cell / gw, cx = cell % gw;
    for (std::size_t y = 0; y < spec.tile; ++y) {
      for (std::size_t x = 0; x < spec.tile; ++x) {
        for (std::size_t c = 0; c < spec.channels; ++c) {
          const std::size_t dst = ((cy * spec.tile + y) * spec.width + cx * spec.tile + x) * spec.channels + c;
          img[dst] = tiles[(y * spec.tile + x) * spec.channels + c];
        }
      }
    }
    bank.patterns.push_back(std::move(img));
  }
  return bank;
}

bool frame_active(const DatasetSpec& spec, std::size_t k, std::size_t t) {
  if (!spec.temporal_order) return true;
  if (k + 1 == spec.classes && spec.classes % 2 == 1) return true;
  const bool early = t < spec.frames / 2;
  return (k % 2 == 0) == early;
}

}  // namespace

std::vector<float> class_pattern(const DatasetSpec& spec, std::size_t k) {
  spec.validate();
  if (k >= spec.classes) throw DataError(fmt::format("class {} outside [0, {})", k, spec.classes));
  return build_patterns(spec).patterns[pattern_index(spec, k)];
}

double class_tone_hz(const DatasetSpec& spec, std::size_t k) {
  return 200.0 + 60.0 * static_cast<double>(pattern_index(spec, k));
}

Dataset generate(const DatasetSpec& spec) {
  spec.validate();
  const PatternBank bank = build_patterns(spec);
  Dataset ds;
  ds.spec = spec;
  ds.clips.reserve(spec.total());
  const std::size_t frame_len = spec.height * spec.width * spec.channels;
  std::size_t index = 0;
  for (std::size_t k = 0; k < spec.classes; ++k) {
    const std::vector<float>& pattern = bank.patterns[pattern_index(spec, k)];
    const std::size_t tone_idx = pattern_index(spec, k);
    const double f0 = class_tone_hz(spec, k);
    for (std::size_t i = 0; i < spec.count(k); ++i, ++index) {
      std::mt19937_64 rng(derive_seed(spec.seed, 0x100000 + index));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::normal_distribution<double> nv(0.0, 1.0);
      bool video_on = true, audio_on = true;
      if (u(rng) >= spec.rho) {
        if (u(rng) < 0.5) {
          video_on = false;
        } else {
          audio_on = false;
        }
      }
      ClipSample clip;
      clip.id = fmt::format("clip_{:05d}", index);
      clip.label = static_cast<int>(k);
      clip.frames = Tensor<float>({spec.frames, spec.height, spec.width, spec.channels});
      float* f = clip.frames.ptr();
      for (std::size_t t = 0; t < spec.frames; ++t) {
        const bool on = video_on && frame_active(spec, k, t);
        for (std::size_t j = 0; j < frame_len; ++j) {
          const double base = on ? pattern[j] : 0.5;
          f[t * frame_len + j] = static_cast<float>(std::clamp(base + spec.sigma_v * nv(rng), 0.0, 1.0));
        }
      }
      clip.waveform.sample_rate = spec.sample_rate;
      clip.waveform.samples.resize(spec.audio_samples);
      const double phase = 2.0 * std::numbers::pi * u(rng);
      const double w = 2.0 * std::numbers::pi * f0 / spec.sample_rate;
      for (std::size_t n = 0; n < spec.audio_samples; ++n) {
        double s = 0.0;
        if (audio_on) {
          const double x = w * static_cast<double>(n) + phase;
          s = spec.tone_amplitude * std::sin(x);
          if (tone_idx % 2 == 1) s += spec.tone_amplitude * (0.5 * std::sin(2.0 * x) + 0.25 * std::sin(3.0 * x));
        }
        s += spec.sigma_a * nv(rng);
        clip.waveform.samples[n] = static_cast<float>(std::clamp(s, -1.0, 1.0));
      }
      ds.clips.push_back(std::move(clip));
    }
  }
  return ds;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back(c.label);
  return out;
}

std::uint32_t Dataset::checksum() const {
  std::uint32_t crc = 0;
  for (const auto& c : clips) {
    crc = crc32_bytes(std::as_bytes(std::span<const char>(c.id.data(), c.id.size())), crc);
    crc = crc32_bytes(std::as_bytes(std::span<const int>(&c.label, 1)), crc);
    crc = crc32_bytes(std::as_bytes(c.frames.data()), crc);
    crc = crc32_bytes(std::as_bytes(std::span<const float>(c.waveform.samples)), crc);
  }
  return crc;
}

FoldAssignment make_folds(std::span<const int> labels, std::size_t n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw ConfigError(fmt::format("need at least 2 folds, got {}", n_folds));
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [k, idx] : by_class) {
    if (idx.size() < n_folds) {
      throw DataError(fmt::format("class {} has {} samples, fewer than {} folds", k, idx.size(), n_folds));
    }
  }
  FoldAssignment folds(n_folds);
  std::mt19937_64 rng(derive_seed(seed, 0xF01D));
  std::size_t next = 0;  // continues across classes so fold sizes stay balanced
  for (auto& [k, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i : idx) {
      folds[next].push_back(i);
      next = (next + 1) % n_folds;
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<std::size_t> complement(const FoldAssignment& folds, std::size_t held_out) {
  if (held_out >= folds.size()) throw DataError(fmt::format("fold {} outside {} folds", held_out, folds.size()));
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (f != held_out) out.insert(out.end(), folds[f].begin(), folds[f].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

json spec_to_json(const DatasetSpec& s) {
  return json{{"classes", s.classes},         {"clips_per_class", s.clips_per_class},
              {"class_counts", s.class_counts}, {"sigma_v", s.sigma_v},
              {"sigma_a", s.sigma_a},         {"rho", s.rho},
              {"temporal_order", s.temporal_order}, {"seed", s.seed},
              {"frames", s.frames},           {"height", s.height},
              {"width", s.width},             {"channels", s.channels},
              {"tile", s.tile},               {"sample_rate", s.sample_rate},
              {"audio_samples", s.audio_samples}, {"tone_amplitude", s.tone_amplitude}};
}

DatasetSpec spec_from_json(const json& j) {
  DatasetSpec s;
  s.classes = j.at("classes").get<std::size_t>();
  s.clips_per_class = j.at("clips_per_class").get<std::size_t>();
  s.class_counts = j.at("class_counts").get<std::vector<std::size_t>>();
  s.sigma_v = j.at("sigma_v").get<double>();
  s.sigma_a = j.at("sigma_a").get<double>();
  s.rho = j.at("rho").get<double>();
  s.temporal_order = j.at("temporal_order").get<bool>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.frames = j.at("frames").get<std::size_t>();
  s.height = j.at("height").get<std::size_t>();
  s.width = j.at("width").get<std::size_t>();
  s.channels = j.at("channels").get<std::size_t>();
  s.tile = j.at("tile").get<std::size_t>();
  s.sample_rate = j.at("sample_rate").get<int>();
  s.audio_samples = j.at("audio_samples").get<std::size_t>();
  s.tone_amplitude = j.at("tone_amplitude").get<double>();
  return s;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError(fmt::format("cannot open '{}'", path.string()));
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw DataError(fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
  }
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "audio");
  std::ofstream manifest(dir / "dataset.manifest");
  if (!manifest) throw IoError(fmt::format("cannot write '{}'", (dir / "dataset.manifest").string()));
  for (const auto& c : ds.clips) {
    const std::string frames_rel = "frames/" + c.id + ".clpe";
    const std::string wav_rel = "audio/" + c.id + ".wav";
    write_checkpoint<float>(dir / frames_rel, {{"frames", &c.frames}});
    audio::write_wav(dir / wav_rel, c.waveform);
    manifest << json{{"id", c.id}, {"frames_path", frames_rel}, {"wav_path", wav_rel}, {"label", c.label}}.dump()
             << '\n';
  }
  std::ofstream spec(dir / "dataset_spec.json");
  spec << spec_to_json(ds.spec).dump(2) << '\n';
  if (!manifest || !spec) throw IoError(fmt::format("failed writing dataset under '{}'", dir.string()));
}

Dataset load_dataset(const std::filesystem::path& manifest, int expected_sample_rate) {
  namespace fs = std::filesystem;
  std::ifstream is(manifest);
  if (!is) throw IoError(fmt::format("cannot open manifest '{}'", manifest.string()));
  const fs::path base = manifest.parent_path();
  Dataset ds;
  const fs::path spec_path = base / "dataset_spec.json";
  if (fs::exists(spec_path)) ds.spec = spec_from_json(read_json(spec_path));
  std::string line;
  std::size_t line_no = 0;
  int max_label = -1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(fmt::format("{}:{}: invalid JSON: {}", manifest.string(), line_no, e.what()));
    }
    for (const char* key : {"id", "frames_path", "wav_path", "label"}) {
      if (!j.contains(key)) throw DataError(fmt::format("{}:{}: missing key '{}'", manifest.string(), line_no, key));
    }
    ClipSample c;
    c.id = j["id"].get<std::string>();
    c.label = j["label"].get<int>();
    if (c.label < 0) throw DataError(fmt::format("{}:{}: negative label", manifest.string(), line_no));
    auto resolve = [&base](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
    c.frames = Checkpoint::read(resolve(j["frames_path"].get<std::string>())).at("frames").to_tensor<float>();
    c.waveform = audio::load_waveform(resolve(j["wav_path"].get<std::string>()), expected_sample_rate);
    max_label = std::max(max_label, c.label);
    ds.clips.push_back(std::move(c));
  }
  if (ds.clips.empty()) throw DataError(fmt::format("manifest '{}' lists no clips", manifest.string()));
  if (!fs::exists(spec_path)) ds.spec.classes = static_cast<std::size_t>(max_label + 1);
  if (static_cast<std::size_t>(max_label) >= ds.spec.classes) {
    throw DataError(fmt::format("label {} exceeds the {} declared classes", max_label, ds.spec.classes));
  }
  return ds;
}

void save_folds(const FoldAssignment& folds, std::span<const ClipSample> clips, const std::filesystem::path& path) {
  json j = json::array();
  for (const auto& f : folds) {
    json ids = json::array();
    for (std::size_t i : f) ids.push_back(clips[i].id);
    j.push_back(std::move(ids));
  }
  std::ofstream os(path);
  os << j.dump() << '\n';
  if (!os) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

FoldAssignment load_folds(const std::filesystem::path& path, std::span<const ClipSample> clips) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < clips.size(); ++i) index.emplace(clips[i].id, i);
  const json j = read_json(path);
  if (!j.is_array()) throw DataError(fmt::format("'{}' must hold a list of id lists", path.string()));
  FoldAssignment folds;
  std::map<std::size_t, std::size_t> owner;
  for (const auto& f : j) {
    std::vector<std::size_t> fold;
    for (const auto& id : f) {
      const auto it = index.find(id.get<std::string>());
      if (it == index.end()) throw DataError(fmt::format("fold file names unknown clip '{}'", id.get<std::string>()));
      if (!owner.emplace(it->second, folds.size()).second) {
        throw FoldLeakageError(fmt::format("clip '{}' appears in more than one fold", it->first));
      }
      fold.push_back(it->second);
    }
    std::sort(fold.begin(), fold.end());
    folds.push_back(std::move(fold));
  }
  return folds;
}

}  // namespace claip
