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
#include <utility>
#include <vector>

#include "claip/tensor.hpp"

namespace claip {

// Named-tensor container ("CLPE"), little-endian:
//   header  : magic "CLPE" | version u32 | tensor count u64
//   record  : name length u32 | UTF-8 name | rank u32 | dims u64 x rank |
//             dtype tag u8 | raw data | CRC32 u32 of the record's bytes
// The dtype tag holds 1 (f32) or 2 (f64) in the low bits; bit 7 marks a
// trainable tensor.
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { F32 = 1, F64 = 2 };

struct StoredTensor {
  std::string name;
  Shape shape;
  DType dtype = DType::F32;
  bool requires_grad = false;
  std::vector<std::byte> raw;

  template <typename T>
  Tensor<T> to_tensor() const;
};

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, const Tensor<T>*>>;

template <typename T>
void write_checkpoint(const std::filesystem::path& path, const NamedTensors<T>& tensors);

class Checkpoint {
 public:
  static Checkpoint read(const std::filesystem::path& path);

  const std::vector<StoredTensor>& tensors() const noexcept { return tensors_; }
  bool contains(const std::string& name) const { return index_.contains(name); }
  const StoredTensor& at(const std::string& name) const;

  // Copies values and the trainable flag into dst; throws
  // CheckpointShapeError naming the tensor on a shape mismatch and
  // CheckpointMissingError when absent.
  template <typename T>
  void load_into(const std::string& name, Tensor<T>& dst) const;

 private:
  std::vector<StoredTensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

// CRC32 of the file bytes; convenient for "same checkpoint" comparisons.
std::uint32_t file_checksum(const std::filesystem::path& path);

}  // namespace claip
