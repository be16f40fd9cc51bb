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
#include <optional>
#include <span>
#include <vector>

#include "claip/data.hpp"
#include "claip/metrics.hpp"
#include "claip/model.hpp"
#include "claip/trainer.hpp"

namespace claip {

struct FoldReport {
  std::size_t fold = 0;
  ConfusionMatrix confusion{2};
  double uar = 0.0;
  double war = 0.0;
  std::size_t trainable = 0;
  std::size_t total = 0;
  double ratio = 0.0;
};

FoldReport evaluate_predictions(std::size_t fold, std::size_t classes, std::span<const int> labels,
                                std::span<const int> predictions);

// Eval-mode pass in index order. Throws FoldLeakageError when train_idx overlaps eval_idx.
template <typename T>
FoldReport evaluate(ClaipModel<T>& model, std::span<const PreparedClip<T>> clips, std::span<const std::size_t> eval_idx,
                    std::size_t fold, std::span<const std::size_t> train_idx = {});

struct CrossValidation {
  std::vector<FoldReport> folds;  // ascending fold index
  double mean_uar = 0.0, std_uar = 0.0;
  double mean_war = 0.0, std_war = 0.0;
};

// Arithmetic mean and population standard deviation over folds.
CrossValidation summarize(std::vector<FoldReport> folds);

struct CrossValidateOptions {
  std::vector<std::size_t> folds;  // empty selects every fold
  std::size_t threads = 1;
  // Per-fold training artifacts go to out_dir/fold_<i>.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(std::size_t fold, const EpochRecord&)> on_epoch;
};

// Trains one fresh model per held-out fold on the remaining folds. The training seed of fold f is
// derive_seed(train.seed, f), so results do not depend on thread count.
template <typename T>
CrossValidation cross_validate(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                               std::span<const PreparedClip<T>> clips, const FoldAssignment& folds,
                               const CrossValidateOptions& opts = {});

template <typename T>
std::vector<PreparedClip<T>> prepare_all(const ModelConfig& cfg, std::span<const ClipSample> clips,
                                         std::size_t threads = 1);

// report.csv columns: fold, uar, war, trainable_M, ratio; followed by mean and std rows.
void write_report_csv(const CrossValidation& cv, const std::filesystem::path& path);

// CSV with columns id, label, z0..z{n-1} holding the fused pre-classifier feature.
template <typename T>
void export_features(ClaipModel<T>& model, std::span<const PreparedClip<T>> clips, const std::filesystem::path& path,
                     std::size_t batch = 64);

// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the first failure after all workers join.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace claip
