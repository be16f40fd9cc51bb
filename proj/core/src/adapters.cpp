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

#include "claip/adapters.hpp"

#include <random>

#include <fmt/format.h>

#include "claip/error.hpp"

namespace claip {

template <typename T>
std::size_t AdapterSet<T>::trainable_count() const {
  std::size_t n = 0;
  visit([&n](const std::string&, Tensor<T>& t) {
    if (t.requires_grad()) n += t.size();
  });
  return n;
}

template <typename T>
void AdapterSet<T>::visit(const TensorVisitor<T>& fn) const {
  for (const auto& [path, layer] : layers) layer->visit_adapter("lora." + path, fn);
}

template <typename T>
AdapterSet<T> inject(TransformerEncoder<T>& encoder, std::size_t rank, double alpha, double dropout,
                     std::uint64_t seed) {
  if (encoder.adapters_injected()) {
    throw StateError(fmt::format("adapters already injected into the {} encoder", encoder.name()));
  }
  if (!encoder.frozen()) {
    throw StateError(fmt::format("inject() needs a frozen {} encoder", encoder.name()));
  }
  AdapterSet<T> set;
  std::mt19937_64 rng(seed);
  encoder.visit_linears([&](const std::string& path, LoraLinear<T>& layer) {
    layer.attach_adapter(rank, alpha, dropout, rng);
    set.layers.emplace(path, &layer);
  });
  encoder.mark_injected();
  return set;
}

template <typename T>
void save_adapters(const AdapterSet<T>& adapters, const std::filesystem::path& path) {
  NamedTensors<T> list;
  adapters.visit([&list](const std::string& name, Tensor<T>& t) { list.emplace_back(name, &t); });
  write_checkpoint(path, list);
}

template <typename T>
void load_adapters(const AdapterSet<T>& adapters, const std::filesystem::path& path) {
  const Checkpoint ck = Checkpoint::read(path);
  adapters.visit([&ck](const std::string& name, Tensor<T>& t) { ck.load_into(name, t); });
}

#define CLAIP_INSTANTIATE(T)                                                                        \
  template struct AdapterSet<T>;                                                                    \
  template AdapterSet<T> inject(TransformerEncoder<T>&, std::size_t, double, double, std::uint64_t); \
  template void save_adapters(const AdapterSet<T>&, const std::filesystem::path&);                  \
  template void load_adapters(const AdapterSet<T>&, const std::filesystem::path&);

CLAIP_INSTANTIATE(float)
CLAIP_INSTANTIATE(double)
#undef CLAIP_INSTANTIATE

}  // namespace claip
