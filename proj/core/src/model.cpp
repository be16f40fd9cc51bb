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

#include "claip/model.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "claip/checkpoint.hpp"
#include "claip/error.hpp"
#include "claip/ops.hpp"

namespace claip {

void ModelConfig::validate() const {
  if (classes < 2) throw ConfigError(fmt::format("model.classes must be >= 2, got {}", classes));
  if (frames == 0) throw ConfigError("clip.frames must be positive");
  if (lora_dropout < 0.0 || lora_dropout >= 1.0) {
    throw ConfigError(fmt::format("lora.dropout must lie in [0, 1), got {}", lora_dropout));
  }
  if (lora_rank > 0 && !(lora_alpha > 0.0)) throw ConfigError("lora.alpha must be positive");
  if (uses_visual()) {
    if (visual.kind != EncoderKind::Visual) throw ConfigError("visual encoder must be of visual kind");
    visual.validate();
  }
  if (uses_audio()) {
    if (audio.kind != EncoderKind::Audio) throw ConfigError("audio encoder must be of audio kind");
    audio.validate();
    frontend.validate();
    if (audio.input_w != frontend.n_mels) {
      throw ConfigError(fmt::format("audio encoder expects {} mel bins but the frontend produces {}", audio.input_w,
                                    frontend.n_mels));
    }
  }
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

const ParamGroup& ParamReport::group(const std::string& name) const {
  for (const auto& g : groups) {
    if (g.name == name) return g;
  }
  throw ConfigError(fmt::format("unknown parameter group '{}'", name));
}

template <typename T>
PreparedClip<T> prepare_clip(const ModelConfig& cfg, const audio::AudioFrontend& frontend, const ClipSample& clip) {
  PreparedClip<T> out;
  out.id = clip.id;
  out.label = clip.label;
  if (cfg.uses_visual()) {
    const Tensor<float>& f = clip.frames;
    if (f.rank() != 4) throw ShapeError(fmt::format("clip '{}' frames must be [T,H,W,C], got {}", clip.id,
                                                     shape_str(f.shape())));
    const std::size_t n = f.dim(0);
    if (n < cfg.frames) {
      throw DataError(fmt::format("clip '{}' has {} frames but {} are required", clip.id, n, cfg.frames));
    }
    const std::size_t per_frame = f.size() / n;
    Tensor<float> sampled({cfg.frames, f.dim(1), f.dim(2), f.dim(3)});
    for (std::size_t t = 0; t < cfg.frames; ++t) {
      const std::size_t src = t * n / cfg.frames;
      std::copy_n(f.ptr() + src * per_frame, per_frame, sampled.ptr() + t * per_frame);
    }
    out.frame_patches = patchify_frames<T>(sampled, cfg.visual);
  }
  if (cfg.uses_audio()) {
    const audio::MelSpectrogram mel = frontend(clip.waveform);
    out.audio_patches = patchify_mel<T>(mel.frames, cfg.audio);
  }
  return out;
}

template <typename T>
ClaipModel<T>::ClaipModel(ModelConfig cfg) : cfg_((cfg.validate(), std::move(cfg))), frontend_(cfg_.frontend) {
  const std::size_t rank = cfg_.full_finetune ? 0 : cfg_.lora_rank;
  auto build = [&](const EncoderConfig& ec, const std::string& name, std::uint64_t stream,
                   AdapterSet<T>& adapters) {
    auto enc = std::make_unique<TransformerEncoder<T>>(
        make_backbone<T>(derive_seed(cfg_.backbone_seed, stream), ec, name));
    if (cfg_.full_finetune) {
      enc->set_frozen(false);
    } else if (rank > 0) {
      adapters = inject(*enc, rank, cfg_.lora_alpha, cfg_.lora_dropout, derive_seed(cfg_.init_seed, stream));
    }
    return enc;
  };
  if (cfg_.uses_visual()) {
    visual_ = build(cfg_.visual, "visual", 0, visual_adapters_);
    visual_agg_ = std::make_unique<SequenceAggregator<T>>(cfg_.agg_visual, cfg_.frames, cfg_.visual.d_model,
                                                          cfg_.visual.n_heads, cfg_.visual.mlp_ratio,
                                                          derive_seed(cfg_.init_seed, 10));
  }
  if (cfg_.uses_audio()) {
    audio_ = build(cfg_.audio, "audio", 1, audio_adapters_);
    audio_agg_ = std::make_unique<SequenceAggregator<T>>(cfg_.agg_audio, cfg_.audio.num_patches(),
                                                         cfg_.audio.d_model, cfg_.audio.n_heads,
                                                         cfg_.audio.mlp_ratio, derive_seed(cfg_.init_seed, 11));
  }
  if (cfg_.modality == Modality::AV) {
    fusion_ = std::make_unique<FusionHead<T>>(cfg_.fusion, cfg_.visual.d_model, cfg_.audio.d_model, cfg_.classes,
                                              derive_seed(cfg_.init_seed, 20));
  } else {
    const std::size_t width = cfg_.uses_visual() ? cfg_.visual.d_model : cfg_.audio.d_model;
    single_head_ = std::make_unique<LinearHead<T>>(width, cfg_.classes, derive_seed(cfg_.init_seed, 21));
  }
}

namespace {

template <typename T>
Tensor<T> stack(std::span<const PreparedClip<T>* const> batch, Tensor<T> PreparedClip<T>::*field) {
  const Tensor<T>& first = batch.front()->*field;
  Shape shape{batch.size()};
  shape.insert(shape.end(), first.shape().begin(), first.shape().end());
  Tensor<T> out(shape);
  const std::size_t per = first.size();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Tensor<T>& t = batch[b]->*field;
    if (t.shape() != first.shape()) {
      throw ShapeError(fmt::format("clip '{}' input shape {} differs from {} in the same batch", batch[b]->id,
                                   shape_str(t.shape()), shape_str(first.shape())));
    }
    std::copy_n(t.ptr(), per, out.ptr() + b * per);
  }
  return out;
}

}  // namespace

template <typename T>
typename ClaipModel<T>::Output ClaipModel<T>::forward(Tape<T>& tape, std::span<const PreparedClip<T>* const> batch,
                                                      ForwardContext& ctx) {
  if (batch.empty()) throw DataError("empty batch");
  const std::size_t B = batch.size();
  Var<T> z_v, z_a;
  if (visual_) {
    Tensor<T> patches = stack<T>(batch, &PreparedClip<T>::frame_patches);
    if (patches.rank() != 4 || patches.dim(1) != cfg_.frames) {
      throw ShapeError(fmt::format("frame patches must be [B,{},P,pd], got {}", cfg_.frames,
                                   shape_str(patches.shape())));
    }
    const std::size_t P = patches.dim(2), pd = patches.dim(3);
    patches.reshape({B * cfg_.frames, P, pd});
    Var<T> per_frame = encode_frames(tape, *visual_, patches, ctx);  // [B*T, d]
    Var<T> seq = ops::reshape(per_frame, {B, cfg_.frames, cfg_.visual.d_model});
    z_v = visual_agg_->forward(tape, seq, ctx);
  }
  if (audio_) {
    Tensor<T> patches = stack<T>(batch, &PreparedClip<T>::audio_patches);
    Var<T> tokens = encode_audio_tokens(tape, *audio_, patches, ctx);  // [B, P_a, d]
    z_a = audio_agg_->forward(tape, tokens, ctx);
  }
  if (fusion_) {
    auto out = fusion_->forward(tape, z_v, z_a);
    return {out.logits, out.fused};
  }
  Var<T> z = visual_ ? z_v : z_a;
  return {single_head_->forward(tape, z), z};
}

template <typename T>
Tensor<T> ClaipModel<T>::logits(std::span<const PreparedClip<T>* const> batch) {
  Tape<T> tape;
  ForwardContext ctx;
  return forward(tape, batch, ctx).logits.value();
}

template <typename T>
std::vector<int> ClaipModel<T>::predict(std::span<const PreparedClip<T>* const> batch) {
  const Tensor<T> z = logits(batch);
  const std::size_t K = z.dim(1);
  std::vector<int> out(z.dim(0));
  for (std::size_t b = 0; b < out.size(); ++b) {
    const T* row = z.ptr() + b * K;
    out[b] = static_cast<int>(std::max_element(row, row + K) - row);
  }
  return out;
}

template <typename T>
void ClaipModel<T>::visit_grouped(const std::function<void(Group, const std::string&, Tensor<T>&)>& fn) {
  auto tag = [&fn](Group g) { return [&fn, g](const std::string& n, Tensor<T>& t) { fn(g, n, t); }; };
  if (visual_) visual_->visit_base(tag(Group::VisualBackbone));
  if (audio_) audio_->visit_base(tag(Group::AudioBackbone));
  visual_adapters_.visit(tag(Group::VisualLora));
  audio_adapters_.visit(tag(Group::AudioLora));
  if (visual_agg_) visual_agg_->visit("agg.visual", tag(Group::Aggregator));
  if (audio_agg_) audio_agg_->visit("agg.audio", tag(Group::Aggregator));
  if (fusion_) fusion_->visit("head.fusion", tag(Group::Head));
  if (single_head_) single_head_->visit("head.linear", tag(Group::Head));
}

template <typename T>
void ClaipModel<T>::visit(const TensorVisitor<T>& fn) {
  visit_grouped([&fn](Group, const std::string& n, Tensor<T>& t) { fn(n, t); });
}

template <typename T>
NamedTensors<T> ClaipModel<T>::named_tensors() {
  NamedTensors<T> out;
  visit([&out](const std::string& n, Tensor<T>& t) { out.emplace_back(n, &t); });
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> ClaipModel<T>::trainable_parameters() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  visit([&out](const std::string& n, Tensor<T>& t) {
    if (t.requires_grad()) out.emplace_back(n, &t);
  });
  return out;
}

template <typename T>
ParamReport ClaipModel<T>::count_params() {
  ParamReport r;
  r.groups = {{"backbone.visual"}, {"backbone.audio"}, {"lora.visual"},
              {"lora.audio"},      {"aggregator"},     {"head"}};
  visit_grouped([&r](Group g, const std::string&, Tensor<T>& t) {
    ParamGroup& pg = r.groups[static_cast<std::size_t>(g)];
    pg.total += t.size();
    if (t.requires_grad()) pg.trainable += t.size();
  });
  for (const auto& g : r.groups) {
    r.total += g.total;
    r.trainable += g.trainable;
  }
  r.ratio = r.total == 0 ? 0.0 : static_cast<double>(r.trainable) / static_cast<double>(r.total);
  return r;
}

template <typename T>
std::uint32_t ClaipModel<T>::backbone_checksum() {
  std::uint32_t crc = 0;
  auto fold = [&crc](const std::string&, Tensor<T>& t) {
    crc = crc32_bytes(std::as_bytes(std::span<const T>(t.data())), crc);
  };
  if (visual_) visual_->visit_base(fold);
  if (audio_) audio_->visit_base(fold);
  return crc;
}

template <typename T>
void ClaipModel<T>::save(const std::filesystem::path& path) {
  write_checkpoint(path, named_tensors());
}

template <typename T>
void ClaipModel<T>::load(const std::filesystem::path& path) {
  const Checkpoint ck = Checkpoint::read(path);
  visit([&ck](const std::string& n, Tensor<T>& t) { ck.load_into(n, t); });
}

template PreparedClip<float> prepare_clip<float>(const ModelConfig&, const audio::AudioFrontend&, const ClipSample&);
template PreparedClip<double> prepare_clip<double>(const ModelConfig&, const audio::AudioFrontend&,
                                                   const ClipSample&);
template class ClaipModel<float>;
template class ClaipModel<double>;

}  // namespace claip
