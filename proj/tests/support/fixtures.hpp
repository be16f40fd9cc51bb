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

// Small shared configurations so unit tests run in seconds.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "claip/config.hpp"
#include "claip/data.hpp"
#include "claip/evaluation.hpp"
#include "claip/model.hpp"

namespace fixture {

// The tiny preset with a reduced corpus; resolve() fills in encoder geometry.
inline claip::RunConfig tiny_run(std::size_t clips_per_class = 4, std::size_t classes = 7, double sigma = 0.2) {
  claip::RunConfig c = claip::preset_config("tiny");
  c.data.clips_per_class = clips_per_class;
  c.data.classes = classes;
  c.data.sigma_v = sigma;
  c.data.sigma_a = sigma;
  c.data.seed = 1;
  c.model.lora_dropout = 0.0;
  c.resolve();
  return c;
}

// Narrower still: width 16 so double-precision finite differences stay cheap.
inline claip::RunConfig micro_run(std::size_t classes = 3) {
  claip::RunConfig c = tiny_run(2, classes);
  for (const char* k : {"visual_encoder.d_model", "audio_encoder.d_model"}) claip::set_key(c, k, "16");
  c.data.height = 16;
  c.data.width = 16;
  c.data.frames = 2;
  c.model.frames = 2;
  c.resolve();
  return c;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("claip_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

template <typename T>
std::vector<const claip::PreparedClip<T>*> pointers(const std::vector<claip::PreparedClip<T>>& clips) {
  std::vector<const claip::PreparedClip<T>*> out;
  for (const auto& c : clips) out.push_back(&c);
  return out;
}

}  // namespace fixture
