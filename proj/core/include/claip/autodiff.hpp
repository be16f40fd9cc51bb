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
#include <initializer_list>
#include <span>
#include <vector>

#include "claip/tensor.hpp"

namespace claip {

template <typename T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid until the tape is reset.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Define-by-run reverse-mode tape. Every primitive appends one node holding
// its value and an adjoint closure; backward() replays the closures in reverse
// record order. Nodes that do not depend on any trainable leaf are never given
// a gradient buffer and their closures are skipped.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  // Leaf bound to an externally owned parameter. The tape keeps a pointer, so
  // the parameter must outlive backward().
  Var<T> parameter(Tensor<T>& param);
  Var<T> record(Tensor<T> value, std::initializer_list<std::size_t> inputs, BackwardFn fn);
  Var<T> record(Tensor<T> value, const std::vector<std::size_t>& inputs, BackwardFn fn);

  const Tensor<T>& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  // Upstream adjoint of a node during backward.
  std::span<const T> grad_of(std::size_t id) const;
  // Adjoint accumulator of an input, allocated on first use; nullptr when the
  // input does not require a gradient.
  T* accum(std::size_t id);

  // Adjoint of an intermediate node after backward (empty if none).
  std::span<const T> node_grad(std::size_t id) const;

  // Seeds d(loss)/d(loss) = 1 and propagates. Leaf adjoints are added into
  // the bound parameters' gradient buffers.
  void backward(const Var<T>& loss);

  bool backward_done() const noexcept { return backward_done_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  void reset();

 private:
  struct Node {
    Tensor<T> own;
    Tensor<T>* param = nullptr;
    BackwardFn fn;
    bool requires_grad = false;
    Buffer<T> grad;
  };

  Var<T> push(Node node);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

}  // namespace claip
