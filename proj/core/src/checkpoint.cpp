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

#include "claip/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <type_traits>

#include <fmt/format.h>

#include "claip/error.hpp"

namespace claip {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'C', 'L', 'P', 'E'};
constexpr std::uint8_t kTrainableBit = 0x80;

std::size_t dtype_size(DType d) { return d == DType::F64 ? 8 : 4; }

template <typename T>
constexpr DType dtype_of() {
  return std::is_same_v<T, double> ? DType::F64 : DType::F32;
}

class ByteWriter {
 public:
  template <typename U>
  void put(U v) {
    const auto* p = reinterpret_cast<const std::byte*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(U));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::byte*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  std::vector<std::byte>& bytes() { return buf_; }

 private:
  std::vector<std::byte> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::byte>& buf, std::string path) : buf_(buf), path_(std::move(path)) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  const std::byte* take(std::size_t n, const char* what) {
    need(n, what);
    const std::byte* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t pos() const { return pos_; }
  const std::byte* at(std::size_t p) const { return buf_.data() + p; }

 private:
  void need(std::size_t n, const char* what) {
    if (pos_ + n > buf_.size()) {
      throw CheckpointTruncatedError(
          fmt::format("'{}' truncated while reading {} at byte {}", path_, what, pos_));
    }
  }
  const std::vector<std::byte>& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::vector<std::byte> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> buf(size);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size));
  return buf;
}

}  // namespace

template <typename T>
Tensor<T> StoredTensor::to_tensor() const {
  Tensor<T> out(shape);
  const std::size_t n = numel(shape);
  if (dtype == DType::F32) {
    std::vector<float> tmp(n);
    std::memcpy(tmp.data(), raw.data(), n * 4);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(tmp[i]);
  } else {
    std::vector<double> tmp(n);
    std::memcpy(tmp.data(), raw.data(), n * 8);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(tmp[i]);
  }
  out.set_requires_grad(requires_grad);
  return out;
}

template <typename T>
void write_checkpoint(const std::filesystem::path& path, const NamedTensors<T>& tensors) {
  ByteWriter w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(tensors.size());
  for (const auto& [name, t] : tensors) {
    const std::size_t start = w.bytes().size();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t->rank()));
    for (std::size_t d : t->shape()) w.put<std::uint64_t>(d);
    const auto tag = static_cast<std::uint8_t>(static_cast<std::uint8_t>(dtype_of<T>()) |
                                               (t->requires_grad() ? kTrainableBit : 0));
    w.put<std::uint8_t>(tag);
    w.put_bytes(t->ptr(), t->size() * sizeof(T));
    const std::span<const std::byte> record(w.bytes().data() + start, w.bytes().size() - start);
    w.put<std::uint32_t>(crc32_bytes(record));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

Checkpoint Checkpoint::read(const std::filesystem::path& path) {
  const std::vector<std::byte> buf = slurp(path);
  ByteReader r(buf, path.string());
  const std::byte* magic = r.take(4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointFormatError(fmt::format("'{}' is not a CLPE checkpoint (bad magic)", path.string()));
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointFormatError(
        fmt::format("'{}' has container version {}, expected {}", path.string(), version, kCheckpointVersion));
  }
  const auto count = r.get<std::uint64_t>("tensor count");
  Checkpoint ck;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t start = r.pos();
    StoredTensor st;
    const auto name_len = r.get<std::uint32_t>("name length");
    const std::byte* name = r.take(name_len, "name");
    st.name.assign(reinterpret_cast<const char*>(name), name_len);
    const auto rank = r.get<std::uint32_t>("rank");
    for (std::uint32_t d = 0; d < rank; ++d) st.shape.push_back(r.get<std::uint64_t>("dims"));
    const auto tag = r.get<std::uint8_t>("dtype tag");
    const auto dt = static_cast<std::uint8_t>(tag & ~kTrainableBit);
    if (dt != static_cast<std::uint8_t>(DType::F32) && dt != static_cast<std::uint8_t>(DType::F64)) {
      throw CheckpointFormatError(fmt::format("tensor '{}' has unknown dtype tag {}", st.name, tag));
    }
    st.dtype = static_cast<DType>(dt);
    st.requires_grad = (tag & kTrainableBit) != 0;
    const std::size_t bytes = numel(st.shape) * dtype_size(st.dtype);
    const std::byte* data = r.take(bytes, "tensor data");
    st.raw.assign(data, data + bytes);
    const std::span<const std::byte> record(r.at(start), r.pos() - start);
    const auto stored_crc = r.get<std::uint32_t>("checksum");
    if (crc32_bytes(record) != stored_crc) {
      throw CheckpointChecksumError(fmt::format("'{}': checksum mismatch in tensor '{}'", path.string(), st.name));
    }
    ck.index_[st.name] = ck.tensors_.size();
    ck.tensors_.push_back(std::move(st));
  }
  return ck;
}

const StoredTensor& Checkpoint::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw CheckpointMissingError(fmt::format("checkpoint has no tensor '{}'", name));
  return tensors_[it->second];
}

template <typename T>
void Checkpoint::load_into(const std::string& name, Tensor<T>& dst) const {
  const StoredTensor& st = at(name);
  if (st.shape != dst.shape()) {
    throw CheckpointShapeError(fmt::format("tensor '{}' has shape {} in the checkpoint but {} in the model", name,
                                           shape_str(st.shape), shape_str(dst.shape())));
  }
  dst = st.to_tensor<T>();
}

std::uint32_t file_checksum(const std::filesystem::path& path) {
  return crc32_bytes(slurp(path));
}

template Tensor<float> StoredTensor::to_tensor<float>() const;
template Tensor<double> StoredTensor::to_tensor<double>() const;
template void write_checkpoint(const std::filesystem::path&, const NamedTensors<float>&);
template void write_checkpoint(const std::filesystem::path&, const NamedTensors<double>&);
template void Checkpoint::load_into(const std::string&, Tensor<float>&) const;
template void Checkpoint::load_into(const std::string&, Tensor<double>&) const;

}  // namespace claip
