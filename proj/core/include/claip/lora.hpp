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
#include <random>
#include <string>

#include "claip/module.hpp"

namespace claip {

// Linear layer with a frozen base (W0, bias) and an optional low-rank
// adapter: y = W0 x + bias + (alpha / r) B A dropout(x).
// With rank 0 (or before an adapter is attached) the layer is the plain
// base linear. Dropout applies to the adapter input only.
template <typename T>
class LoraLinear {
 public:
  LoraLinear() = default;
  LoraLinear(std::size_t d_in, std::size_t d_out, bool with_bias = true);

  // Truncated-normal weight, zero bias. A non-positive stddev selects 1/sqrt(d_in).
  void init_base(std::mt19937_64& rng, double stddev = 0.0);

  // A ~ truncated N(0, 1/r), B = 0. Rank 0 marks the layer adapted without
  // adding parameters. Throws StateError on a second attach and ConfigError
  // when rank exceeds min(d_in, d_out).
  void attach_adapter(std::size_t rank, double alpha, double dropout, std::mt19937_64& rng);

  Var<T> forward(Tape<T>& tape, const Var<T>& x, ForwardContext& ctx);

  std::size_t d_in() const noexcept { return d_in_; }
  std::size_t d_out() const noexcept { return d_out_; }
  std::size_t rank() const noexcept { return rank_; }
  double alpha() const noexcept { return alpha_; }
  double dropout() const noexcept { return dropout_; }
  double scaling() const noexcept { return rank_ == 0 ? 0.0 : alpha_ / static_cast<double>(rank_); }
  bool adapted() const noexcept { return adapted_; }
  bool merged() const noexcept { return merged_; }
  bool has_bias() const noexcept { return has_bias_; }

  Tensor<T>& weight() { return weight_; }
  const Tensor<T>& weight() const { return weight_; }
  Tensor<T>& bias() { return bias_; }
  Tensor<T>& lora_a() { return a_; }
  Tensor<T>& lora_b() { return b_; }
  const Tensor<T>& lora_a() const { return a_; }
  const Tensor<T>& lora_b() const { return b_; }

  void set_base_trainable(bool on);
  // prefix.weight / prefix.bias
  void visit_base(const std::string& prefix, const TensorVisitor<T>& fn);
  // prefix.A / prefix.B, only when rank > 0
  void visit_adapter(const std::string& prefix, const TensorVisitor<T>& fn);

  // Folds (alpha/r) B A into W0 and drops the adapter. Rank 0 is a no-op
  // (with a warning); a layer that was already merged throws StateError.
  void merge();

 private:
  std::size_t d_in_ = 0;
  std::size_t d_out_ = 0;
  bool has_bias_ = true;
  Tensor<T> weight_;
  Tensor<T> bias_;
  std::size_t rank_ = 0;
  double alpha_ = 0.0;
  double dropout_ = 0.0;
  bool adapted_ = false;
  bool merged_ = false;
  Tensor<T> a_;
  Tensor<T> b_;
};

template <typename T>
void merge(LoraLinear<T>& layer) {
  layer.merge();
}

}  // namespace claip
