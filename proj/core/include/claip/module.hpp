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

#include <functional>
#include <random>
#include <string>

#include "claip/autodiff.hpp"
#include "claip/tensor.hpp"

namespace claip {

// Per-forward options; rng drives dropout masks and is only read when
// train is set.
struct ForwardContext {
  bool train = false;
  std::mt19937_64* rng = nullptr;
};

template <typename T>
using TensorVisitor = std::function<void(const std::string& name, Tensor<T>& tensor)>;

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t width, double eps = 1e-5);

  Var<T> forward(Tape<T>& tape, const Var<T>& x);
  void visit(const std::string& prefix, const TensorVisitor<T>& fn);
  void set_trainable(bool on);

  Tensor<T>& gamma() { return gamma_; }
  Tensor<T>& beta() { return beta_; }

 private:
  Tensor<T> gamma_;
  Tensor<T> beta_;
  double eps_ = 1e-5;
};

}  // namespace claip
