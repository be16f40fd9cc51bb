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
#include <functional>
#include <random>
#include <string>

#include "claip/lora.hpp"
#include "claip/module.hpp"

namespace claip {

template <typename T>
using LinearVisitor = std::function<void(const std::string& path, LoraLinear<T>& layer)>;

// Pre-norm block: x + Attn(LN(x)), then x + MLP(LN(x)) with a GELU MLP.
template <typename T>
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(std::size_t width, std::size_t heads, std::size_t mlp_ratio);

  void init(std::mt19937_64& rng, double stddev = 0.0);

  // x: [..., seq_len, width] or [rows, width] with rows a multiple of seq_len.
  Var<T> forward(Tape<T>& tape, const Var<T>& x, std::size_t seq_len, ForwardContext& ctx);

  void visit_base(const std::string& prefix, const TensorVisitor<T>& fn);
  // The six adaptable linears: attn.{q,k,v,out}, mlp.{fc1,fc2}.
  void visit_linears(const std::string& prefix, const LinearVisitor<T>& fn);
  void set_base_trainable(bool on);

  std::size_t width() const noexcept { return width_; }
  std::size_t heads() const noexcept { return heads_; }
  std::size_t hidden() const noexcept { return hidden_; }

 private:
  std::size_t width_ = 0;
  std::size_t heads_ = 1;
  std::size_t hidden_ = 0;
  LayerNorm<T> ln1_;
  LoraLinear<T> q_, k_, v_, out_;
  LayerNorm<T> ln2_;
  LoraLinear<T> fc1_, fc2_;
};

}  // namespace claip
