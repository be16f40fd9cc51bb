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
#include <span>
#include <string>
#include <vector>

#include "claip/clip.hpp"
#include "claip/model.hpp"

namespace claip {

struct TensorGradcheck {
  std::string name;
  std::size_t probed = 0;
  double max_rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<TensorGradcheck> tensors;
  double max_rel_error = 0.0;
  double tolerance = 1e-4;
  bool passed() const noexcept { return max_rel_error < tolerance; }
};

// Central differences on an f64 copy of the configured model with dropout off. Adapter B matrices are
// randomized first so that gradients through the adapters are not trivially zero. Up to max_probes entries
// per trainable tensor are checked; relative error is |a - b| / max(|a|, |b|, 1e-6).
GradcheckReport gradcheck(ModelConfig cfg, std::span<const ClipSample> clips, std::size_t max_probes = 6,
                          double step = 1e-5, std::uint64_t seed = 0);

void write_gradcheck_json(const GradcheckReport& r, const std::filesystem::path& path);

}  // namespace claip
