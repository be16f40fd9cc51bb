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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "claip/data.hpp"
#include "claip/model.hpp"
#include "claip/trainer.hpp"

namespace claip {

inline constexpr std::string_view kVersion = "0.1.0";

// Everything a run needs, fully resolved before it starts.
struct RunConfig {
  std::string preset = "desk";
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  std::size_t threads = 1;

  DatasetSpec data;
  std::size_t folds = 5;
  std::uint64_t fold_seed = 0;
  std::size_t audio_patch_frames = 8;  // spectrogram frames per audio token

  ModelConfig model;
  TrainConfig train;
  int constant_class = -1;  // >= 0 replaces the model by a constant predictor in eval

  // Derives encoder input geometry from the data and frontend settings and validates every section.
  void resolve();
};

// Named starting points; every key can still be overridden afterwards.
//   desk: visual preset B, 1 s of audio, 30 epochs at lr 1e-5.
//   tiny: width 48, depth 1, 4 frames, 0.5 s of audio, lr 1e-3; the acceptance-scale model.
//   large: visual preset L on top of desk.
RunConfig preset_config(std::string_view name);

// Keys are "section.name". Unknown keys raise ConfigError naming the closest valid key.
void set_key(RunConfig& cfg, std::string_view key, std::string_view value);
std::string get_key(const RunConfig& cfg, std::string_view key);
const std::vector<std::string>& config_keys();

// Parses an INI file: "[section]" headers, "name = value" lines, ';' or '#' comments. run.preset is applied first.
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
// Applies "section.name=value" overrides on top of an existing configuration.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides);

// Resolved configuration in the same INI grammar, headed by the version and seed.
std::string serialize(const RunConfig& cfg);
// Writes run.cfg and stamp.json into dir.
void write_run_record(const RunConfig& cfg, const std::filesystem::path& dir, std::string_view command);

std::size_t edit_distance(std::string_view a, std::string_view b);

}  // namespace claip
