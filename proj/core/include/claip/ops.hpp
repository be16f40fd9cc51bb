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
#include <span>
#include <vector>

#include "claip/autodiff.hpp"

// Differentiable primitives. Each op checks shapes, computes its value, and
// records the adjoint on the tape of its first argument.
namespace claip::ops {

// [m x k] x [k x n] -> [m x n]
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

// x[..., d_in] * weight[d_out x d_in]^T (+ bias[d_out]) -> [..., d_out]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight);
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T factor);

// Exact (erf) GELU.
template <typename T>
Var<T> gelu(const Var<T>& x);
template <typename T>
Var<T> sigmoid(const Var<T>& x);

// Inverted dropout: survivors scaled by 1/(1-p) while training, identity
// otherwise. Requires 0 <= p < 1.
template <typename T>
Var<T> dropout(const Var<T>& x, double p, bool train, std::mt19937_64& rng);

// Normalizes over the last axis; the affine form applies gamma/beta [d].
template <typename T>
Var<T> layer_norm(const Var<T>& x, double eps = 1e-5);
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps = 1e-5);

template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis);

// Reduces (and removes) one axis.
template <typename T>
Var<T> mean(const Var<T>& x, std::size_t axis);
// Sum of every element -> scalar.
template <typename T>
Var<T> sum(const Var<T>& x);

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis);
template <typename T>
Var<T> transpose(const Var<T>& x);
template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end);
template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

// x[..., S, d] + table[S, d], broadcast over the leading axes.
template <typename T>
Var<T> embedding_add(const Var<T>& x, const Var<T>& table);
// Repeats x along a new leading axis of length n.
template <typename T>
Var<T> expand(const Var<T>& x, std::size_t n);

// Multi-head scaled dot-product self-attention over independent sequences.
// q, k, v: [N, d] with N a multiple of seq_len (or [B, S, d]); output matches q.
template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t seq_len,
                 std::size_t heads);

// Mean over the batch of -log softmax(logits)[label]; logits [B x K].
template <typename T>
Var<T> cross_entropy_with_logits(const Var<T>& logits, std::span<const int> labels);

}  // namespace claip::ops
