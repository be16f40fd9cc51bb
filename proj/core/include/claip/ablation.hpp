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
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "claip/config.hpp"
#include "claip/evaluation.hpp"

namespace claip {

struct AblationArm {
  std::string group;  // rank, aggregation, fusion, modality
  std::string name;
  RunConfig config;
};

// Rank sweep {0, 2, 4, 8, 16, full}, aggregation {mean/mean, trans/mean, trans/trans},
// fusion {concat, additive, gated} and modality {A, V, AV}; each arm changes one axis of base.
std::vector<AblationArm> ablation_grid(const RunConfig& base);

struct AblationRow {
  std::string group;
  std::string arm;
  bool ok = false;
  std::string error;  // "<ErrorKind>: message" when ok is false
  double uar = 0.0, uar_std = 0.0;
  double war = 0.0, war_std = 0.0;
  std::size_t trainable = 0;
  std::size_t total = 0;
  double ratio = 0.0;
};

struct AblationOptions {
  std::size_t threads = 1;
  std::vector<std::string> only;  // arm names or groups; empty runs all
  std::function<void(const AblationRow&)> on_row;
};

// Arms with identical resolved configurations are trained once. A failing arm is recorded and the rest continue.
// Rows follow grid order regardless of thread count.
std::vector<AblationRow> run_ablation(const RunConfig& base, std::span<const ClipSample> clips,
                                      const FoldAssignment& folds, const AblationOptions& opts = {});

void write_ablation_csv(std::span<const AblationRow> rows, const std::filesystem::path& path);
void write_ablation_markdown(std::span<const AblationRow> rows, const std::filesystem::path& path);

}  // namespace claip
