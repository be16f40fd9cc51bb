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
#include <filesystem>
#include <map>
#include <string>

#include "claip/checkpoint.hpp"
#include "claip/encoder.hpp"

namespace claip {

// The adapters injected into one encoder, keyed by layer path such as
// "visual.block3.attn.q". Pointers refer into the owning encoder.
template <typename T>
struct AdapterSet {
  std::map<std::string, LoraLinear<T>*> layers;

  std::size_t size() const noexcept { return layers.size(); }
  std::size_t trainable_count() const;
  // Adapter tensors named "lora.<path>.A" / "lora.<path>.B".
  void visit(const TensorVisitor<T>& fn) const;
};

// Wraps every attention projection and MLP linear of a frozen encoder with a
// rank-r adapter. A second injection into the same encoder throws StateError.
template <typename T>
AdapterSet<T> inject(TransformerEncoder<T>& encoder, std::size_t rank, double alpha, double dropout,
                     std::uint64_t seed);

template <typename T>
void save_adapters(const AdapterSet<T>& adapters, const std::filesystem::path& path);
template <typename T>
void load_adapters(const AdapterSet<T>& adapters, const std::filesystem::path& path);

}  // namespace claip
