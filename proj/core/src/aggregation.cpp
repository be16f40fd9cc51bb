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

#include "claip/aggregation.hpp"

#include <algorithm>
#include <random>

#include <fmt/format.h>

#include "claip/error.hpp"
#include "claip/ops.hpp"

namespace claip {

std::string to_string(AggregationMode m) { return m == AggregationMode::Transformer ? "transformer" : "mean"; }

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::ConcatLinear: return "concat_linear";
    case FusionMode::Additive: return "additive";
    case FusionMode::Gated: return "gated";
  }
  return "?";
}

std::string to_string(Modality m) {
  switch (m) {
    case Modality::A: return "A";
    case Modality::V: return "V";
    case Modality::AV: return "AV";
  }
  return "?";
}

AggregationMode parse_aggregation(std::string_view s) {
  if (s == "transformer" || s == "trans") return AggregationMode::Transformer;
  if (s == "mean") return AggregationMode::Mean;
  throw ConfigError(fmt::format("unknown aggregation '{}' (expected transformer or mean)", s));
}

FusionMode parse_fusion(std::string_view s) {
  if (s == "concat_linear" || s == "concat") return FusionMode::ConcatLinear;
  if (s == "additive") return FusionMode::Additive;
  if (s == "gated") return FusionMode::Gated;
  throw ConfigError(fmt::format("unknown fusion '{}' (expected concat_linear, additive or gated)", s));
}

Modality parse_modality(std::string_view s) {
  if (s == "A") return Modality::A;
  if (s == "V") return Modality::V;
  if (s == "AV" || s == "A+V") return Modality::AV;
  throw ConfigError(fmt::format("unknown modality '{}' (expected A, V or AV)", s));
}

namespace {

template <typename T>
Tensor<T> trainable_normal(Shape shape, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  fill_truncated_normal(t, 0.02, rng);
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> trainable_zeros(Shape shape) {
  Tensor<T> t(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

}  // namespace

template <typename T>
TemporalTransformer<T>::TemporalTransformer(std::size_t seq_len, std::size_t width, std::size_t heads,
                                            std::size_t mlp_ratio, std::uint64_t seed)
    : seq_len_(seq_len), block_(width, heads, mlp_ratio) {
  if (seq_len == 0) throw ConfigError("temporal transformer needs a positive sequence length");
  std::mt19937_64 rng(seed);
  cls_ = trainable_normal<T>(Shape{1, width}, rng);
  pos_ = trainable_normal<T>(Shape{seq_len + 1, width}, rng);
  block_.init(rng);
  block_.set_base_trainable(true);
}

template <typename T>
Var<T> TemporalTransformer<T>::forward(Tape<T>& tape, const Var<T>& x, ForwardContext& ctx) {
  const std::size_t b = x.shape()[0], d = x.shape()[2];
  const std::vector<Var<T>> parts{ops::expand(tape.parameter(cls_), b), x};
  Var<T> z = ops::embedding_add(ops::concat<T>(parts, 1), tape.parameter(pos_));
  z = block_.forward(tape, z, seq_len_ + 1, ctx);
  return ops::reshape(ops::slice(z, 1, 0, 1), Shape{b, d});
}

template <typename T>
void TemporalTransformer<T>::visit(const std::string& prefix, const TensorVisitor<T>& fn) {
  fn(prefix + ".cls", cls_);
  fn(prefix + ".pos", pos_);
  block_.visit_base(prefix + ".block", fn);
}

template <typename T>
SequenceAggregator<T>::SequenceAggregator(AggregationMode mode, std::size_t seq_len, std::size_t width,
                                          std::size_t heads, std::size_t mlp_ratio, std::uint64_t seed)
    : mode_(mode), seq_len_(seq_len), width_(width) {
  if (mode == AggregationMode::Transformer) temporal_.emplace(seq_len, width, heads, mlp_ratio, seed);
}

template <typename T>
Var<T> SequenceAggregator<T>::forward(Tape<T>& tape, const Var<T>& seq, ForwardContext& ctx) {
  const Shape& s = seq.shape();
  if (s.size() != 3 || s[2] != width_) {
    throw ShapeError(fmt::format("aggregator expects [B, T, {}], got {}", width_, shape_str(s)));
  }
  if (s[1] == 0) throw ShapeError("aggregator received an empty sequence");
  if (s[1] != seq_len_) {
    throw ShapeError(fmt::format("aggregator configured for {} steps, got {}", seq_len_, s[1]));
  }
  if (mode_ == AggregationMode::Mean) return ops::mean(seq, 1);
  return temporal_->forward(tape, seq, ctx);
}

template <typename T>
void SequenceAggregator<T>::visit(const std::string& prefix, const TensorVisitor<T>& fn) {
  if (temporal_) temporal_->visit(prefix, fn);
}

template <typename T>
FusionHead<T>::FusionHead(FusionMode mode, std::size_t d_v, std::size_t d_a, std::size_t classes,
                          std::uint64_t seed)
    : mode_(mode), d_v_(d_v), d_a_(d_a), classes_(classes), shared_(std::min(d_v, d_a)) {
  std::mt19937_64 rng(seed);
  if (mode == FusionMode::ConcatLinear) {
    w_ = trainable_normal<T>(Shape{classes, d_v + d_a}, rng);
    b_ = trainable_zeros<T>(Shape{classes});
    return;
  }
  proj_v_w_ = trainable_normal<T>(Shape{shared_, d_v}, rng);
  proj_v_b_ = trainable_zeros<T>(Shape{shared_});
  proj_a_w_ = trainable_normal<T>(Shape{shared_, d_a}, rng);
  proj_a_b_ = trainable_zeros<T>(Shape{shared_});
  if (mode == FusionMode::Gated) {
    gate_w_ = trainable_normal<T>(Shape{shared_, d_v + d_a}, rng);
    gate_b_ = trainable_zeros<T>(Shape{shared_});
  }
  w_ = trainable_normal<T>(Shape{classes, shared_}, rng);
  b_ = trainable_zeros<T>(Shape{classes});
}

template <typename T>
std::size_t FusionHead<T>::fused_width() const noexcept {
  return mode_ == FusionMode::ConcatLinear ? d_v_ + d_a_ : shared_;
}

template <typename T>
typename FusionHead<T>::Output FusionHead<T>::forward(Tape<T>& tape, const Var<T>& z_v, const Var<T>& z_a) {
  if (z_v.shape().size() != 2 || z_a.shape().size() != 2 || z_v.shape()[1] != d_v_ || z_a.shape()[1] != d_a_ ||
      z_v.shape()[0] != z_a.shape()[0]) {
    throw ShapeError(fmt::format("fusion head expects [B, {}] and [B, {}], got {} and {}", d_v_, d_a_,
                                 shape_str(z_v.shape()), shape_str(z_a.shape())));
  }
  Output out;
  const std::vector<Var<T>> both{z_v, z_a};
  if (mode_ == FusionMode::ConcatLinear) {
    out.fused = ops::concat<T>(both, 1);
  } else {
    Var<T> pv = ops::linear(z_v, tape.parameter(proj_v_w_), tape.parameter(proj_v_b_));
    Var<T> pa = ops::linear(z_a, tape.parameter(proj_a_w_), tape.parameter(proj_a_b_));
    if (mode_ == FusionMode::Additive) {
      out.fused = ops::add(pv, pa);
    } else {
      Var<T> g;
      if (forced_gate_) {
        g = tape.constant(Tensor<T>(pv.shape(), *forced_gate_));
      } else {
        g = ops::sigmoid(ops::linear(ops::concat<T>(both, 1), tape.parameter(gate_w_), tape.parameter(gate_b_)));
      }
      out.fused = ops::add(pa, ops::mul(g, ops::sub(pv, pa)));
    }
  }
  out.logits = ops::linear(out.fused, tape.parameter(w_), tape.parameter(b_));
  return out;
}

template <typename T>
void FusionHead<T>::visit(const std::string& prefix, const TensorVisitor<T>& fn) {
  if (mode_ != FusionMode::ConcatLinear) {
    fn(prefix + ".proj_v.weight", proj_v_w_);
    fn(prefix + ".proj_v.bias", proj_v_b_);
    fn(prefix + ".proj_a.weight", proj_a_w_);
    fn(prefix + ".proj_a.bias", proj_a_b_);
  }
  if (mode_ == FusionMode::Gated) {
    fn(prefix + ".gate.weight", gate_w_);
    fn(prefix + ".gate.bias", gate_b_);
  }
  fn(prefix + ".W_c", w_);
  fn(prefix + ".b_c", b_);
}

template <typename T>
LinearHead<T>::LinearHead(std::size_t width, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  w_ = trainable_normal<T>(Shape{classes, width}, rng);
  b_ = trainable_zeros<T>(Shape{classes});
}

template <typename T>
Var<T> LinearHead<T>::forward(Tape<T>& tape, const Var<T>& z) {
  return ops::linear(z, tape.parameter(w_), tape.parameter(b_));
}

template <typename T>
void LinearHead<T>::visit(const std::string& prefix, const TensorVisitor<T>& fn) {
  fn(prefix + ".weight", w_);
  fn(prefix + ".bias", b_);
}

template class TemporalTransformer<float>;
template class TemporalTransformer<double>;
template class SequenceAggregator<float>;
template class SequenceAggregator<double>;
template class FusionHead<float>;
template class FusionHead<double>;
template class LinearHead<float>;
template class LinearHead<double>;

}  // namespace claip
