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

#include "claip/encoder.hpp"

#include <fmt/format.h>

#include "claip/checkpoint.hpp"
#include "claip/error.hpp"
#include "claip/ops.hpp"

namespace claip {

void EncoderConfig::validate() const {
  if (depth < 1) throw ConfigError("encoder depth must be at least 1");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError(fmt::format("encoder d_model {} is not divisible by {} heads", d_model, n_heads));
  }
  if (mlp_ratio == 0) throw ConfigError("encoder mlp_ratio must be positive");
  if (patch_h == 0 || patch_w == 0 || channels == 0) throw ConfigError("patch sizes and channels must be positive");
  if (kind == EncoderKind::Visual && (input_h % patch_h != 0 || input_w % patch_w != 0)) {
    throw ConfigError(fmt::format("frame {}x{} is not tiled by {}x{} patches", input_h, input_w, patch_h, patch_w));
  }
  if (kind == EncoderKind::Audio && input_w % patch_w != 0) {
    throw ConfigError(fmt::format("{} mel bins not tiled by {}-bin patches", input_w, patch_w));
  }
  if (num_patches() == 0) throw ConfigError("encoder input is smaller than one patch");
}

EncoderConfig visual_preset(char size) {
  EncoderConfig c;
  c.kind = EncoderKind::Visual;
  if (size == 'B' || size == 'b') return c;
  if (size == 'L' || size == 'l') {
    c.depth = 6;
    c.d_model = 192;
    c.n_heads = 6;
    return c;
  }
  throw ConfigError(fmt::format("unknown backbone preset '{}' (expected B or L)", size));
}

EncoderConfig audio_preset(std::size_t mel_frames, std::size_t n_mels) {
  EncoderConfig c;
  c.kind = EncoderKind::Audio;
  c.input_h = mel_frames;
  c.input_w = n_mels;
  c.patch_h = 8;
  c.patch_w = n_mels;
  return c;
}

std::size_t encoder_param_count(const EncoderConfig& cfg) {
  const std::size_t d = cfg.d_model, h = d * cfg.mlp_ratio;
  std::size_t n = cfg.patch_dim() * d + d;
  if (cfg.has_cls()) n += d;
  if (cfg.use_pos) n += cfg.seq_len() * d;
  const std::size_t block = 4 * d + 4 * (d * d + d) + (d * h + h) + (h * d + d);
  n += cfg.depth * block;
  n += 2 * d;
  return n;
}

template <typename T>
TransformerEncoder<T>::TransformerEncoder(EncoderConfig cfg, std::string name)
    : cfg_((cfg.validate(), cfg)),
      name_(std::move(name)),
      patch_(cfg_.patch_dim(), cfg_.d_model),
      ln_final_(cfg_.d_model) {
  if (cfg_.has_cls()) cls_ = Tensor<T>(Shape{1, cfg_.d_model});
  if (cfg_.use_pos) pos_ = Tensor<T>(Shape{cfg_.seq_len(), cfg_.d_model});
  blocks_.reserve(cfg_.depth);
  for (std::size_t i = 0; i < cfg_.depth; ++i) blocks_.emplace_back(cfg_.d_model, cfg_.n_heads, cfg_.mlp_ratio);
}

template <typename T>
TransformerEncoder<T>::TransformerEncoder(const TransformerEncoder& other)
    : cfg_(other.cfg_),
      name_(other.name_),
      patch_(other.patch_),
      cls_(other.cls_),
      pos_(other.pos_),
      blocks_(other.blocks_),
      ln_final_(other.ln_final_),
      frozen_(other.frozen_),
      injected_(other.injected_) {}

template <typename T>
void TransformerEncoder<T>::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  patch_.init_base(rng);
  if (cfg_.has_cls()) fill_truncated_normal(cls_, cfg_.embed_std, rng);
  if (cfg_.use_pos) fill_truncated_normal(pos_, cfg_.embed_std, rng);
  for (auto& b : blocks_) b.init(rng);
}

template <typename T>
Var<T> TransformerEncoder<T>::forward(Tape<T>& tape, const Tensor<T>& patches, ForwardContext& ctx) {
  if (patches.rank() != 3 || patches.dim(2) != cfg_.patch_dim() ||
      (cfg_.use_pos && patches.dim(1) != cfg_.num_patches()) || patches.dim(1) == 0) {
    throw ShapeError(fmt::format("{} encoder expects patches [N, {}, {}], got {}", name_, cfg_.num_patches(),
                                 cfg_.patch_dim(), shape_str(patches.shape())));
  }
  ++calls_;
  const std::size_t n = patches.dim(0);
  Var<T> x = patch_.forward(tape, tape.constant(patches), ctx);
  if (cfg_.has_cls()) {
    const Var<T> cls = ops::expand(tape.parameter(cls_), n);
    const std::vector<Var<T>> parts{cls, x};
    x = ops::concat<T>(parts, 1);
  }
  if (cfg_.use_pos) x = ops::embedding_add(x, tape.parameter(pos_));
  const std::size_t seq = x.shape()[1];
  for (auto& b : blocks_) x = b.forward(tape, x, seq, ctx);
  return ln_final_.forward(tape, x);
}

template <typename T>
void TransformerEncoder<T>::visit_base(const TensorVisitor<T>& fn) {
  patch_.visit_base(name_ + ".patch", fn);
  if (cfg_.has_cls()) fn(name_ + ".cls", cls_);
  if (cfg_.use_pos) fn(name_ + ".pos", pos_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].visit_base(fmt::format("{}.block{}", name_, i), fn);
  ln_final_.visit(name_ + ".ln_final", fn);
}

template <typename T>
void TransformerEncoder<T>::visit_linears(const LinearVisitor<T>& fn) {
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].visit_linears(fmt::format("{}.block{}", name_, i), fn);
}

template <typename T>
void TransformerEncoder<T>::set_frozen(bool frozen) {
  frozen_ = frozen;
  visit_base([frozen](const std::string&, Tensor<T>& t) { t.set_requires_grad(!frozen); });
}

template <typename T>
Tensor<T> patchify_frames(const Tensor<float>& frames, const EncoderConfig& cfg) {
  if (frames.rank() != 4 || frames.dim(1) != cfg.input_h || frames.dim(2) != cfg.input_w ||
      frames.dim(3) != cfg.channels) {
    throw ShapeError(fmt::format("frames {} do not match [N, {}, {}, {}]", shape_str(frames.shape()), cfg.input_h,
                                 cfg.input_w, cfg.channels));
  }
  const std::size_t n = frames.dim(0), H = cfg.input_h, W = cfg.input_w, C = cfg.channels;
  const std::size_t ph = cfg.patch_h, pw = cfg.patch_w, gw = cfg.grid_w();
  Tensor<T> out(Shape{n, cfg.num_patches(), cfg.patch_dim()});
  for (std::size_t f = 0; f < n; ++f) {
    for (std::size_t p = 0; p < cfg.num_patches(); ++p) {
      const std::size_t gy = p / gw, gx = p % gw;
      T* dst = out.ptr() + (f * cfg.num_patches() + p) * cfg.patch_dim();
      for (std::size_t y = 0; y < ph; ++y) {
        for (std::size_t x = 0; x < pw; ++x) {
          const float* src = frames.ptr() + ((f * H + gy * ph + y) * W + gx * pw + x) * C;
          for (std::size_t c = 0; c < C; ++c) *dst++ = static_cast<T>(src[c]);
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> patchify_mel(const Tensor<float>& mel, const EncoderConfig& cfg) {
  if (mel.rank() != 2 || mel.dim(1) != cfg.input_w) {
    throw ShapeError(fmt::format("spectrogram {} does not have {} mel bins", shape_str(mel.shape()), cfg.input_w));
  }
  const std::size_t frames = mel.dim(0), F = mel.dim(1);
  if (frames < cfg.patch_h) {
    throw ShapeError(fmt::format("spectrogram has {} frames, fewer than one {}-frame patch; pad the waveform", frames,
                                 cfg.patch_h));
  }
  const std::size_t gt = frames / cfg.patch_h, gm = F / cfg.patch_w;
  Tensor<T> out(Shape{gt * gm, cfg.patch_h * cfg.patch_w});
  for (std::size_t tb = 0; tb < gt; ++tb) {
    for (std::size_t mb = 0; mb < gm; ++mb) {
      T* dst = out.ptr() + (tb * gm + mb) * cfg.patch_h * cfg.patch_w;
      for (std::size_t y = 0; y < cfg.patch_h; ++y) {
        for (std::size_t x = 0; x < cfg.patch_w; ++x) {
          *dst++ = static_cast<T>(mel.at(tb * cfg.patch_h + y, mb * cfg.patch_w + x));
        }
      }
    }
  }
  return out;
}

template <typename T>
Var<T> encode_frames(Tape<T>& tape, TransformerEncoder<T>& enc, const Tensor<T>& patches, ForwardContext& ctx) {
  if (!enc.config().has_cls()) throw StateError("encode_frames needs an encoder with a CLS token");
  Var<T> tokens = enc.forward(tape, patches, ctx);
  const std::size_t n = tokens.shape()[0], d = tokens.shape()[2];
  return ops::reshape(ops::slice(tokens, 1, 0, 1), Shape{n, d});
}

template <typename T>
Var<T> encode_audio_tokens(Tape<T>& tape, TransformerEncoder<T>& enc, const Tensor<T>& patches,
                           ForwardContext& ctx) {
  if (enc.config().has_cls()) throw StateError("encode_audio_tokens needs an audio encoder");
  return enc.forward(tape, patches, ctx);
}

template <typename T>
Tensor<T> encode_frame(TransformerEncoder<T>& enc, const Tensor<float>& frame) {
  if (frame.rank() != 3) throw ShapeError(fmt::format("frame must be [H, W, C], got {}", shape_str(frame.shape())));
  Shape s = frame.shape();
  s.insert(s.begin(), 1);
  Tape<T> tape;
  ForwardContext ctx;
  Var<T> cls = encode_frames(tape, enc, patchify_frames<T>(frame.reshaped(s), enc.config()), ctx);
  return cls.value().reshaped(Shape{enc.config().d_model});
}

template <typename T>
Tensor<T> encode_audio(TransformerEncoder<T>& enc, const audio::MelSpectrogram& mel) {
  Tensor<T> patches = patchify_mel<T>(mel.frames, enc.config());
  patches.reshape(Shape{1, patches.dim(0), patches.dim(1)});
  Tape<T> tape;
  ForwardContext ctx;
  Var<T> tokens = encode_audio_tokens(tape, enc, patches, ctx);
  return tokens.value().reshaped(Shape{tokens.shape()[1], tokens.shape()[2]});
}

template <typename T>
TransformerEncoder<T> make_backbone(std::uint64_t seed, const EncoderConfig& cfg, const std::string& name) {
  TransformerEncoder<T> enc(cfg, name);
  enc.init(seed);
  enc.set_frozen(true);
  return enc;
}

template <typename T>
void save_backbone(TransformerEncoder<T>& enc, const std::filesystem::path& path) {
  NamedTensors<T> list;
  enc.visit_base([&list](const std::string& name, Tensor<T>& t) { list.emplace_back(name, &t); });
  write_checkpoint(path, list);
}

template <typename T>
TransformerEncoder<T> load_backbone(const std::filesystem::path& path, const EncoderConfig& cfg,
                                    const std::string& name) {
  const Checkpoint ck = Checkpoint::read(path);
  TransformerEncoder<T> enc(cfg, name);
  bool any_trainable = false;
  enc.visit_base([&](const std::string& tname, Tensor<T>& t) {
    ck.load_into(tname, t);
    any_trainable = any_trainable || t.requires_grad();
  });
  if (!any_trainable) enc.set_frozen(true);
  return enc;
}

#define CLAIP_INSTANTIATE(T)                                                                                 \
  template class TransformerEncoder<T>;                                                                      \
  template Tensor<T> patchify_frames<T>(const Tensor<float>&, const EncoderConfig&);                        \
  template Tensor<T> patchify_mel<T>(const Tensor<float>&, const EncoderConfig&);                           \
  template Var<T> encode_frames(Tape<T>&, TransformerEncoder<T>&, const Tensor<T>&, ForwardContext&);        \
  template Var<T> encode_audio_tokens(Tape<T>&, TransformerEncoder<T>&, const Tensor<T>&, ForwardContext&);  \
  template Tensor<T> encode_frame(TransformerEncoder<T>&, const Tensor<float>&);                             \
  template Tensor<T> encode_audio(TransformerEncoder<T>&, const audio::MelSpectrogram&);                     \
  template TransformerEncoder<T> make_backbone<T>(std::uint64_t, const EncoderConfig&, const std::string&);  \
  template void save_backbone(TransformerEncoder<T>&, const std::filesystem::path&);                         \
  template TransformerEncoder<T> load_backbone<T>(const std::filesystem::path&, const EncoderConfig&,        \
                                                  const std::string&);

CLAIP_INSTANTIATE(float)
CLAIP_INSTANTIATE(double)
#undef CLAIP_INSTANTIATE

}  // namespace claip
