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

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "claip/audio.hpp"
#include "claip/transformer.hpp"

namespace claip {

enum class EncoderKind { Visual, Audio };

// Shape of a stand-in backbone. Visual inputs are H x W x C frames cut into
// patch_h x patch_w tiles with a learned CLS token in front; audio inputs are
// T_a x F_a log-mel spectrograms cut into non-overlapping time x mel tiles
// (time-major order) with no CLS token.
struct EncoderConfig {
  EncoderKind kind = EncoderKind::Visual;
  std::size_t depth = 4;
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t input_h = 32;  // visual: image height; audio: spectrogram frames
  std::size_t input_w = 32;  // visual: image width; audio: mel bins
  std::size_t channels = 1;
  std::size_t patch_h = 8;
  std::size_t patch_w = 8;
  bool use_pos = true;
  double embed_std = 0.5;  // CLS and positional embedding init

  bool has_cls() const noexcept { return kind == EncoderKind::Visual; }
  std::size_t patch_dim() const noexcept { return patch_h * patch_w * channels; }
  std::size_t grid_h() const noexcept { return input_h / patch_h; }
  std::size_t grid_w() const noexcept { return input_w / patch_w; }
  std::size_t num_patches() const noexcept { return grid_h() * grid_w(); }
  std::size_t seq_len() const noexcept { return num_patches() + (has_cls() ? 1 : 0); }
  void validate() const;
};

// Desk-scale presets. "B" and "L" differ only in the visual encoder (L is
// deeper and wider); both share the same audio encoder.
EncoderConfig visual_preset(char size);
EncoderConfig audio_preset(std::size_t mel_frames = 98, std::size_t n_mels = 64);

// Number of scalars an encoder of this shape holds (base weights only).
std::size_t encoder_param_count(const EncoderConfig& cfg);

template <typename T>
class TransformerEncoder {
 public:
  TransformerEncoder(EncoderConfig cfg, std::string name);

  const EncoderConfig& config() const noexcept { return cfg_; }
  const std::string& name() const noexcept { return name_; }

  // patches [N, P, patch_dim] -> token states [N, S, d] after the final LN.
  Var<T> forward(Tape<T>& tape, const Tensor<T>& patches, ForwardContext& ctx);

  void init(std::uint64_t seed);
  // Base tensors, names prefixed with name().
  void visit_base(const TensorVisitor<T>& fn);
  void visit_linears(const LinearVisitor<T>& fn);
  void set_frozen(bool frozen);
  bool frozen() const noexcept { return frozen_; }

  bool adapters_injected() const noexcept { return injected_; }
  void mark_injected() noexcept { injected_ = true; }

  std::size_t calls() const noexcept { return calls_.load(); }

  TransformerEncoder(const TransformerEncoder& other);
  TransformerEncoder& operator=(const TransformerEncoder&) = delete;

 private:
  EncoderConfig cfg_;
  std::string name_;
  LoraLinear<T> patch_;
  Tensor<T> cls_;  // [1, d]
  Tensor<T> pos_;  // [S, d]
  std::vector<TransformerBlock<T>> blocks_;
  LayerNorm<T> ln_final_;
  bool frozen_ = true;
  bool injected_ = false;
  std::atomic<std::size_t> calls_{0};
};

// Frames [N, H, W, C] -> [N, P, patch_h * patch_w * C], raster patch order.
template <typename T>
Tensor<T> patchify_frames(const Tensor<float>& frames, const EncoderConfig& cfg);

// Log-mel [T_a, F_a] -> [P, patch_h * patch_w]; trailing frames that do not
// fill a whole patch are dropped.
template <typename T>
Tensor<T> patchify_mel(const Tensor<float>& mel, const EncoderConfig& cfg);

// Batched encoders on a tape. Frames: CLS rows [N, d]; audio: [B, P, d].
template <typename T>
Var<T> encode_frames(Tape<T>& tape, TransformerEncoder<T>& enc, const Tensor<T>& patches, ForwardContext& ctx);
template <typename T>
Var<T> encode_audio_tokens(Tape<T>& tape, TransformerEncoder<T>& enc, const Tensor<T>& patches,
                           ForwardContext& ctx);

// Inference helpers on a private tape.
template <typename T>
Tensor<T> encode_frame(TransformerEncoder<T>& enc, const Tensor<float>& frame);
template <typename T>
Tensor<T> encode_audio(TransformerEncoder<T>& enc, const audio::MelSpectrogram& mel);

// Seeded stand-in for a pretrained backbone: truncated N(0, 0.02) weights,
// zero biases, unit LayerNorm gains; returned frozen.
template <typename T>
TransformerEncoder<T> make_backbone(std::uint64_t seed, const EncoderConfig& cfg, const std::string& name);

template <typename T>
void save_backbone(TransformerEncoder<T>& enc, const std::filesystem::path& path);

// Rebuilds an encoder of shape cfg from a checkpoint; frozen flags come from
// the stored tensors.
template <typename T>
TransformerEncoder<T> load_backbone(const std::filesystem::path& path, const EncoderConfig& cfg,
                                    const std::string& name);

}  // namespace claip
