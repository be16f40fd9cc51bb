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

#include "claip/autodiff.hpp"

#include <fmt/format.h>

#include "claip/error.hpp"

namespace claip {

template <typename T>
Var<T> Tape<T>::push(Node node) {
  if (backward_done_) {
    throw StateError("tape already differentiated; reset() before recording a new forward pass");
  }
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node node;
  node.own = std::move(value);
  node.own.set_requires_grad(false);
  return push(std::move(node));
}

template <typename T>
Var<T> Tape<T>::parameter(Tensor<T>& param) {
  Node node;
  node.param = &param;
  node.requires_grad = param.requires_grad();
  return push(std::move(node));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<std::size_t> inputs, BackwardFn fn) {
  return record(std::move(value), std::vector<std::size_t>(inputs), std::move(fn));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, const std::vector<std::size_t>& inputs, BackwardFn fn) {
  Node node;
  node.own = std::move(value);
  for (std::size_t id : inputs) {
    if (id >= nodes_.size()) throw StateError("input does not belong to this tape");
    node.requires_grad = node.requires_grad || nodes_[id].requires_grad;
  }
  if (node.requires_grad) node.fn = std::move(fn);
  return push(std::move(node));
}

template <typename T>
const Tensor<T>& Tape<T>::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.param != nullptr ? *n.param : n.own;
}

template <typename T>
std::span<const T> Tape<T>::grad_of(std::size_t id) const {
  return nodes_.at(id).grad;
}

template <typename T>
T* Tape<T>::accum(std::size_t id) {
  Node& n = nodes_.at(id);
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad.assign(value(id).size(), T{0});
  return n.grad.data();
}

template <typename T>
std::span<const T> Tape<T>::node_grad(std::size_t id) const {
  return nodes_.at(id).grad;
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (&loss.tape() != this) throw StateError("loss was recorded on a different tape");
  if (backward_done_) throw StateError("backward() called twice on the same forward pass");
  const Tensor<T>& lv = value(loss.id());
  if (lv.size() != 1) {
    throw ShapeError(fmt::format("backward() needs a scalar loss, got shape {}", shape_str(lv.shape())));
  }
  backward_done_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  accum(loss.id())[0] = T{1};

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param != nullptr) {
      auto& g = n.param->ensure_grad();
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += n.grad[j];
    } else if (n.fn) {
      n.fn(*this, i);
    }
  }
}

template <typename T>
void Tape<T>::reset() {
  nodes_.clear();
  backward_done_ = false;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace claip
