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
#include <initializer_list>
#include <new>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace claip {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);

// 64-byte aligned storage. Vectorized kernels peel a scalar prologue up to the
// first aligned element, so a fixed alignment keeps the summation order, and
// hence every result bit, independent of where the allocator places a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;
std::string shape_str(const Shape& shape);

// Dense row-major array. Parameters carry requires_grad and a lazily
// allocated gradient buffer; a frozen tensor never owns a gradient buffer.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, const std::vector<T>& data);
  Tensor(Shape shape, Buffer<T> data);
  Tensor(Shape shape, std::initializer_list<T> data) : Tensor(std::move(shape), Buffer<T>(data)) {}

  static Tensor scalar(T value) { return Tensor(Shape{}, Buffer<T>{value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }
  Buffer<T>& storage() noexcept { return data_; }
  const Buffer<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(std::size_t row, std::size_t col) { return data_[row * shape_.back() + col]; }
  const T& at(std::size_t row, std::size_t col) const { return data_[row * shape_.back() + col]; }
  T item() const;

  // Same buffer, new shape; numel must agree.
  Tensor reshaped(Shape shape) const;
  void reshape(Shape shape);

  bool requires_grad() const noexcept { return requires_grad_; }
  // Turning gradient tracking off also drops any gradient buffer.
  void set_requires_grad(bool on);

  bool has_grad() const noexcept { return grad_.has_value(); }
  std::span<T> grad();
  std::span<const T> grad() const;
  // Allocates a zeroed gradient buffer; only legal when requires_grad().
  Buffer<T>& ensure_grad();
  void zero_grad();
  void clear_grad() { grad_.reset(); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  Shape shape_;
  Buffer<T> data_;
  bool requires_grad_ = false;
  std::optional<Buffer<T>> grad_;
};

// Bitwise equality of shape and data.
template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

// Truncated normal: draws outside +-2 std are resampled.
template <typename T>
void fill_truncated_normal(Tensor<T>& t, double stddev, std::mt19937_64& rng);

template <typename T>
void fill_normal(Tensor<T>& t, double stddev, std::mt19937_64& rng);

template <typename T>
void fill_uniform(Tensor<T>& t, double lo, double hi, std::mt19937_64& rng);

// CRC32 of the raw bytes of the buffer; used for frozen-weight checks.
template <typename T>
std::uint32_t checksum(const Tensor<T>& t);

std::uint32_t crc32_bytes(std::span<const std::byte> bytes, std::uint32_t seed = 0);

}  // namespace claip
