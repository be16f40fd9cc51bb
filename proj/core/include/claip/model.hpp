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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "claip/adapters.hpp"
#include "claip/aggregation.hpp"
#include "claip/audio.hpp"
#include "claip/clip.hpp"
#include "claip/encoder.hpp"

namespace claip {

// Every architecture and ablation switch of the audiovisual classifier.
struct ModelConfig {
  EncoderConfig visual = visual_preset('B');
  EncoderConfig audio = audio_preset();
  audio::AudioConfig frontend;
  std::size_t frames = 8;  // T, frames per clip seen by the visual branch
  std::size_t classes = 7;
  std::size_t lora_rank = 8;
  double lora_alpha = 32.0;
  double lora_dropout = 0.1;
  // Unfreezes every backbone tensor and injects no adapters.
  bool full_finetune = false;
  AggregationMode agg_visual = AggregationMode::Transformer;
  AggregationMode agg_audio = AggregationMode::Mean;
  FusionMode fusion = FusionMode::ConcatLinear;
  Modality modality = Modality::AV;
  std::uint64_t backbone_seed = 0;
  std::uint64_t init_seed = 1;

  bool uses_visual() const noexcept { return modality != Modality::A; }
  bool uses_audio() const noexcept { return modality != Modality::V; }
  void validate() const;
};

// Splitmix64 step; derives independent seeds from one base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

struct ParamGroup {
  std::string name;
  std::size_t total = 0;
  std::size_t trainable = 0;
};

struct ParamReport {
  std::size_t total = 0;
  std::size_t trainable = 0;
  double ratio = 0.0;
  // backbone.visual, backbone.audio, lora.visual, lora.audio, aggregator, head
  std::vector<ParamGroup> groups;

  const ParamGroup& group(const std::string& name) const;
};

// Model inputs that depend only on the clip and the configuration.
template <typename T>
struct PreparedClip {
  std::string id;
  int label = 0;
  Tensor<T> frame_patches;  // [T, P, patch_dim]; empty when audio-only
  Tensor<T> audio_patches;  // [P_a, patch_dim]; empty when video-only
};

// Samples T frames at a fixed stride, patchifies them, and runs the audio
// frontend only when the audio branch is active.
template <typename T>
PreparedClip<T> prepare_clip(const ModelConfig& cfg, const audio::AudioFrontend& frontend, const ClipSample& clip);

template <typename T>
class ClaipModel {
 public:
  struct Output {
    Var<T> logits;  // [B, K]
    Var<T> fused;   // [B, fused width], the pre-classifier feature
  };

  explicit ClaipModel(ModelConfig cfg);
  ClaipModel(const ClaipModel&) = delete;
  ClaipModel& operator=(const ClaipModel&) = delete;

  const ModelConfig& config() const noexcept { return cfg_; }
  const audio::AudioFrontend& frontend() const noexcept { return frontend_; }

  PreparedClip<T> prepare(const ClipSample& clip) const { return prepare_clip<T>(cfg_, frontend_, clip); }

  Output forward(Tape<T>& tape, std::span<const PreparedClip<T>* const> batch, ForwardContext& ctx);

  // Eval-mode logits [B, K] without keeping the tape.
  Tensor<T> logits(std::span<const PreparedClip<T>* const> batch);
  std::vector<int> predict(std::span<const PreparedClip<T>* const> batch);

  // Every tensor in a fixed order: backbones, adapters, aggregators, head.
  void visit(const TensorVisitor<T>& fn);
  NamedTensors<T> named_tensors();
  std::vector<std::pair<std::string, Tensor<T>*>> trainable_parameters();
  ParamReport count_params();
  // CRC32 over all backbone base tensors.
  std::uint32_t backbone_checksum();

  void save(const std::filesystem::path& path);
  void load(const std::filesystem::path& path);

  TransformerEncoder<T>* visual_encoder() { return visual_ ? visual_.get() : nullptr; }
  TransformerEncoder<T>* audio_encoder() { return audio_ ? audio_.get() : nullptr; }
  const AdapterSet<T>& visual_adapters() const { return visual_adapters_; }
  const AdapterSet<T>& audio_adapters() const { return audio_adapters_; }
  SequenceAggregator<T>* visual_aggregator() { return visual_agg_ ? visual_agg_.get() : nullptr; }
  SequenceAggregator<T>* audio_aggregator() { return audio_agg_ ? audio_agg_.get() : nullptr; }
  FusionHead<T>* fusion_head() { return fusion_ ? fusion_.get() : nullptr; }

 private:
  enum class Group { VisualBackbone, AudioBackbone, VisualLora, AudioLora, Aggregator, Head };
  void visit_grouped(const std::function<void(Group, const std::string&, Tensor<T>&)>& fn);

  ModelConfig cfg_;
  audio::AudioFrontend frontend_;
  std::unique_ptr<TransformerEncoder<T>> visual_;
  std::unique_ptr<TransformerEncoder<T>> audio_;
  AdapterSet<T> visual_adapters_;
  AdapterSet<T> audio_adapters_;
  std::unique_ptr<SequenceAggregator<T>> visual_agg_;
  std::unique_ptr<SequenceAggregator<T>> audio_agg_;
  std::unique_ptr<FusionHead<T>> fusion_;
  std::unique_ptr<LinearHead<T>> single_head_;
};

}  // namespace claip
