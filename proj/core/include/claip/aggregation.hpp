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
#include <optional>
#include <string>
#include <string_view>

#include "claip/transformer.hpp"

namespace claip {

enum class AggregationMode { Transformer, Mean };
enum class FusionMode { ConcatLinear, Additive, Gated };
enum class Modality { A, V, AV };

std::string to_string(AggregationMode m);
std::string to_string(FusionMode m);
std::string to_string(Modality m);
AggregationMode parse_aggregation(std::string_view s);
FusionMode parse_fusion(std::string_view s);
Modality parse_modality(std::string_view s);

// Learnable CLS + positional table over a length-T sequence followed by a
// single transformer block; the CLS output summarizes the sequence.
template <typename T>
class TemporalTransformer {
 public:
  TemporalTransformer(std::size_t seq_len, std::size_t width, std::size_t heads, std::size_t mlp_ratio,
                      std::uint64_t seed);

  // x [B, T, d] -> [B, d]
  Var<T> forward(Tape<T>& tape, const Var<T>& x, ForwardContext& ctx);
  void visit(const std::string& prefix, const TensorVisitor<T>& fn);

  Tensor<T>& cls() { return cls_; }
  Tensor<T>& pos() { return pos_; }
  std::size_t seq_len() const noexcept { return seq_len_; }

 private:
  std::size_t seq_len_;
  Tensor<T> cls_;  // [1, d]
  Tensor<T> pos_;  // [T + 1, d]
  TransformerBlock<T> block_;
};

// Collapses a [B, T, d] sequence to [B, d], either by mean pooling or by a
// temporal transformer. Mean mode holds no parameters.
template <typename T>
class SequenceAggregator {
 public:
  SequenceAggregator(AggregationMode mode, std::size_t seq_len, std::size_t width, std::size_t heads,
                     std::size_t mlp_ratio, std::uint64_t seed);

  Var<T> forward(Tape<T>& tape, const Var<T>& seq, ForwardContext& ctx);
  void visit(const std::string& prefix, const TensorVisitor<T>& fn);

  AggregationMode mode() const noexcept { return mode_; }
  std::size_t seq_len() const noexcept { return seq_len_; }
  std::size_t width() const noexcept { return width_; }
  TemporalTransformer<T>* temporal() { return temporal_ ? &*temporal_ : nullptr; }

 private:
  AggregationMode mode_;
  std::size_t seq_len_;
  std::size_t width_;
  std::optional<TemporalTransformer<T>> temporal_;
};

// Weighted head over clip-level vectors. Produces logits (softmax is the
// inference contract) and the fused pre-classifier feature z_o.
//   concat_linear: z_o = [z_V; z_A],                           logits = W_c z_o + b_c
//   additive:      z_o = P_V z_V + P_A z_A,                     logits = W z_o + b
//   gated:         g = sigmoid(W_g [z_V; z_A] + b_g),
//                  z_o = g * P_V z_V + (1 - g) * P_A z_A,       logits = W z_o + b
// Projections map both modalities to min(d_V, d_A) channels.
template <typename T>
class FusionHead {
 public:
  struct Output {
    Var<T> logits;
    Var<T> fused;
  };

  FusionHead(FusionMode mode, std::size_t d_v, std::size_t d_a, std::size_t classes, std::uint64_t seed);

  Output forward(Tape<T>& tape, const Var<T>& z_v, const Var<T>& z_a);
  void visit(const std::string& prefix, const TensorVisitor<T>& fn);

  FusionMode mode() const noexcept { return mode_; }
  std::size_t fused_width() const noexcept;
  Tensor<T>& classifier_weight() { return w_; }
  Tensor<T>& classifier_bias() { return b_; }
  // Replaces the gate by a constant (gated mode only); used to isolate paths.
  void force_gate(std::optional<T> value) { forced_gate_ = value; }

 private:
  FusionMode mode_;
  std::size_t d_v_, d_a_, classes_, shared_;
  Tensor<T> w_, b_;
  Tensor<T> proj_v_w_, proj_v_b_, proj_a_w_, proj_a_b_;
  Tensor<T> gate_w_, gate_b_;
  std::optional<T> forced_gate_;
};

// K x d linear classifier used when only one modality is active.
template <typename T>
class LinearHead {
 public:
  LinearHead(std::size_t width, std::size_t classes, std::uint64_t seed);
  Var<T> forward(Tape<T>& tape, const Var<T>& z);
  void visit(const std::string& prefix, const TensorVisitor<T>& fn);

 private:
  Tensor<T> w_, b_;
};

}  // namespace claip
