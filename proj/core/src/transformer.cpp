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

#include "claip/transformer.hpp"

#include <fmt/format.h>

#include "claip/error.hpp"
#include "claip/ops.hpp"

namespace claip {

template <typename T>
TransformerBlock<T>::TransformerBlock(std::size_t width, std::size_t heads, std::size_t mlp_ratio)
    : width_(width),
      heads_(heads),
      hidden_(width * mlp_ratio),
      ln1_(width),
      q_(width, width),
      k_(width, width),
      v_(width, width),
      out_(width, width),
      ln2_(width),
      fc1_(width, width * mlp_ratio),
      fc2_(width * mlp_ratio, width) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError(fmt::format("width {} is not divisible by {} heads", width, heads));
  }
}

template <typename T>
void TransformerBlock<T>::init(std::mt19937_64& rng, double stddev) {
  for (LoraLinear<T>* l : {&q_, &k_, &v_, &out_, &fc1_, &fc2_}) l->init_base(rng, stddev);
}

template <typename T>
Var<T> TransformerBlock<T>::forward(Tape<T>& tape, const Var<T>& x, std::size_t seq_len, ForwardContext& ctx) {
  Var<T> h = ln1_.forward(tape, x);
  Var<T> q = q_.forward(tape, h, ctx);
  Var<T> k = k_.forward(tape, h, ctx);
  Var<T> v = v_.forward(tape, h, ctx);
  Var<T> a = ops::attention(q, k, v, seq_len, heads_);
  Var<T> y = ops::add(x, out_.forward(tape, a, ctx));
  Var<T> m = fc1_.forward(tape, ln2_.forward(tape, y), ctx);
  m = fc2_.forward(tape, ops::gelu(m), ctx);
  return ops::add(y, m);
}

template <typename T>
void TransformerBlock<T>::visit_base(const std::string& prefix, const TensorVisitor<T>& fn) {
  ln1_.visit(prefix + ".ln1", fn);
  q_.visit_base(prefix + ".attn.q", fn);
  k_.visit_base(prefix + ".attn.k", fn);
  v_.visit_base(prefix + ".attn.v", fn);
  out_.visit_base(prefix + ".attn.out", fn);
  ln2_.visit(prefix + ".ln2", fn);
  fc1_.visit_base(prefix + ".mlp.fc1", fn);
  fc2_.visit_base(prefix + ".mlp.fc2", fn);
}

template <typename T>
void TransformerBlock<T>::visit_linears(const std::string& prefix, const LinearVisitor<T>& fn) {
  fn(prefix + ".attn.q", q_);
  fn(prefix + ".attn.k", k_);
  fn(prefix + ".attn.v", v_);
  fn(prefix + ".attn.out", out_);
  fn(prefix + ".mlp.fc1", fc1_);
  fn(prefix + ".mlp.fc2", fc2_);
}

template <typename T>
void TransformerBlock<T>::set_base_trainable(bool on) {
  ln1_.set_trainable(on);
  ln2_.set_trainable(on);
  for (LoraLinear<T>* l : {&q_, &k_, &v_, &out_, &fc1_, &fc2_}) l->set_base_trainable(on);
}

template class TransformerBlock<float>;
template class TransformerBlock<double>;

}  // namespace claip
