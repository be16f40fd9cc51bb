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

#include "claip/lora.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "claip/error.hpp"
#include "claip/ops.hpp"

namespace claip {

template <typename T>
LayerNorm<T>::LayerNorm(std::size_t width, double eps)
    : gamma_(Shape{width}, T{1}), beta_(Shape{width}, T{0}), eps_(eps) {}

template <typename T>
Var<T> LayerNorm<T>::forward(Tape<T>& tape, const Var<T>& x) {
  return ops::layer_norm(x, tape.parameter(gamma_), tape.parameter(beta_), eps_);
}

template <typename T>
void LayerNorm<T>::visit(const std::string& prefix, const TensorVisitor<T>& fn) {
  fn(prefix + ".gamma", gamma_);
  fn(prefix + ".beta", beta_);
}

template <typename T>
void LayerNorm<T>::set_trainable(bool on) {
  gamma_.set_requires_grad(on);
  beta_.set_requires_grad(on);
}

template <typename T>
LoraLinear<T>::LoraLinear(std::size_t d_in, std::size_t d_out, bool with_bias)
    : d_in_(d_in), d_out_(d_out), has_bias_(with_bias), weight_(Shape{d_out, d_in}) {
  if (with_bias) bias_ = Tensor<T>(Shape{d_out});
}

template <typename T>
void LoraLinear<T>::init_base(std::mt19937_64& rng, double stddev) {
  fill_truncated_normal(weight_, stddev > 0.0 ? stddev : 1.0 / std::sqrt(static_cast<double>(d_in_)), rng);
  if (has_bias_) std::fill(bias_.data().begin(), bias_.data().end(), T{0});
}

template <typename T>
void LoraLinear<T>::attach_adapter(std::size_t rank, double alpha, double dropout, std::mt19937_64& rng) {
  if (adapted_ || merged_) throw StateError("LoRA adapter already attached to this layer");
  if (rank > std::min(d_in_, d_out_)) {
    throw ConfigError(fmt::format("LoRA rank {} exceeds min(d_in, d_out) = {}", rank, std::min(d_in_, d_out_)));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError(fmt::format("LoRA dropout {} not in [0, 1)", dropout));
  adapted_ = true;
  rank_ = rank;
  alpha_ = alpha;
  dropout_ = dropout;
  if (rank == 0) return;
  a_ = Tensor<T>(Shape{rank, d_in_});
  fill_truncated_normal(a_, 1.0 / std::sqrt(static_cast<double>(rank)), rng);
  b_ = Tensor<T>(Shape{d_out_, rank});
  a_.set_requires_grad(true);
  b_.set_requires_grad(true);
}

template <typename T>
Var<T> LoraLinear<T>::forward(Tape<T>& tape, const Var<T>& x, ForwardContext& ctx) {
  Var<T> w = tape.parameter(weight_);
  Var<T> base = has_bias_ ? ops::linear(x, w, tape.parameter(bias_)) : ops::linear(x, w);
  if (rank_ == 0) return base;
  Var<T> xin = x;
  if (ctx.train && dropout_ > 0.0) {
    if (ctx.rng == nullptr) throw StateError("training forward pass needs an rng for LoRA dropout");
    xin = ops::dropout(x, dropout_, true, *ctx.rng);
  }
  Var<T> low = ops::linear(xin, tape.parameter(a_));
  Var<T> delta = ops::linear(low, tape.parameter(b_));
  return ops::add(base, ops::scale(delta, static_cast<T>(scaling())));
}

template <typename T>
void LoraLinear<T>::set_base_trainable(bool on) {
  weight_.set_requires_grad(on);
  if (has_bias_) bias_.set_requires_grad(on);
}

template <typename T>
void LoraLinear<T>::visit_base(const std::string& prefix, const TensorVisitor<T>& fn) {
  fn(prefix + ".weight", weight_);
  if (has_bias_) fn(prefix + ".bias", bias_);
}

template <typename T>
void LoraLinear<T>::visit_adapter(const std::string& prefix, const TensorVisitor<T>& fn) {
  if (rank_ == 0) return;
  fn(prefix + ".A", a_);
  fn(prefix + ".B", b_);
}

template <typename T>
void LoraLinear<T>::merge() {
  if (merged_) throw StateError("layer already merged into a plain linear");
  if (rank_ == 0) {
    fmt::print(stderr, "warning: merge() on a rank-0 layer is a no-op\n");
    return;
  }
  const T s = static_cast<T>(scaling());
  for (std::size_t o = 0; o < d_out_; ++o) {
    for (std::size_t i = 0; i < d_in_; ++i) {
      T acc{0};
      for (std::size_t k = 0; k < rank_; ++k) acc += b_.at(o, k) * a_.at(k, i);
      if (acc != T{0}) weight_.at(o, i) += s * acc;
    }
  }
  a_ = Tensor<T>();
  b_ = Tensor<T>();
  rank_ = 0;
  merged_ = true;
}

template class LayerNorm<float>;
template class LayerNorm<double>;
template class LoraLinear<float>;
template class LoraLinear<double>;

}  // namespace claip
