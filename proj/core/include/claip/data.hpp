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
#include <span>
#include <string>
#include <vector>

#include "claip/clip.hpp"

namespace claip {

// Synthetic audiovisual classification corpus.
//
// Every class k owns a visual pattern: a class-specific arrangement of one tile bank shared by all classes, so
// the multiset of tiles is identical across classes and only their spatial layout differs. Its audio is a tone
// at 200 + 60k Hz, with two harmonics for odd k. With probability rho both modalities carry the label; otherwise
// exactly one of them does, chosen uniformly, and the other is noise around its neutral level.
//
// With temporal_order set, classes 2m and 2m+1 share a pattern and a tone and differ only in onset: the even
// class shows its pattern in the first half of the clip, the odd class in the second half. A trailing unpaired
// class shows its pattern throughout.
struct DatasetSpec {
  std::size_t classes = 7;
  std::size_t clips_per_class = 50;
  // Optional per-class counts; overrides clips_per_class when non-empty.
  std::vector<std::size_t> class_counts;
  double sigma_v = 0.1;
  double sigma_a = 0.1;
  double rho = 0.5;
  bool temporal_order = false;
  std::uint64_t seed = 0;
  std::size_t frames = 8;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;
  std::size_t tile = 8;
  int sample_rate = 16000;
  std::size_t audio_samples = 8000;
  double tone_amplitude = 0.5;

  std::size_t count(std::size_t k) const { return class_counts.empty() ? clips_per_class : class_counts.at(k); }
  std::size_t total() const;
  void validate() const;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<ClipSample> clips;

  std::vector<int> labels() const;
  // CRC32 over ids, labels, frames and waveforms in clip order.
  std::uint32_t checksum() const;
};

Dataset generate(const DatasetSpec& spec);

// Visual class pattern [H, W, C] in [0, 1] as rendered without noise.
std::vector<float> class_pattern(const DatasetSpec& spec, std::size_t k);
// The tone frequency carrying class k.
double class_tone_hz(const DatasetSpec& spec, std::size_t k);

// folds[f] lists clip indices in ascending order.
using FoldAssignment = std::vector<std::vector<std::size_t>>;

// Stratified: per class, each fold receives floor or ceil of count / n_folds samples.
FoldAssignment make_folds(std::span<const int> labels, std::size_t n_folds, std::uint64_t seed);

// Indices of every fold except held_out, ascending.
std::vector<std::size_t> complement(const FoldAssignment& folds, std::size_t held_out);

// Writes dataset.manifest (one JSON object per line: id, frames_path, wav_path, label) plus frames/ and audio/.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
// Reads a manifest; relative paths resolve against the manifest's directory.
Dataset load_dataset(const std::filesystem::path& manifest, int expected_sample_rate);

// folds.json: a JSON list of id lists.
void save_folds(const FoldAssignment& folds, std::span<const ClipSample> clips, const std::filesystem::path& path);
FoldAssignment load_folds(const std::filesystem::path& path, std::span<const ClipSample> clips);

}  // namespace claip
