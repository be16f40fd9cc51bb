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
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "claip/model.hpp"

namespace claip {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double lr_peak = 1e-5;
  double lr_min = 0.0;
  // Unset means max(1, epochs * 5 / 100), capped below epochs.
  std::optional<std::size_t> warmup_epochs;
  std::uint64_t seed = 0;
  AdamConfig adam;
  double grad_clip = 0.0;  // global L2 norm; 0 disables clipping
  // After every epoch, verifies that no non-trainable tensor changed.
  bool verify_frozen = false;

  std::size_t resolved_warmup() const;
  void validate() const;
};

// Linear warmup from 0 to peak over warmup_steps, then half-cosine decay to lr_min at total_steps.
class CosineSchedule {
 public:
  CosineSchedule(std::size_t total_steps, std::size_t warmup_steps, double peak, double lr_min);

  double lr_at(std::size_t step) const;
  std::size_t total_steps() const noexcept { return total_; }
  std::size_t warmup_steps() const noexcept { return warmup_; }

 private:
  std::size_t total_, warmup_;
  double peak_, min_;
};

inline double lr_at(std::size_t step, const CosineSchedule& s) { return s.lr_at(step); }

template <typename T>
using ParamList = std::vector<std::pair<std::string, Tensor<T>*>>;

// Bias-corrected Adam. Moments exist only for tensors that were trainable when stepped.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // A trainable tensor without a grad buffer takes a zero-gradient step.
  void step(const ParamList<T>& params, double lr);

  std::size_t steps() const noexcept { return t_; }
  std::size_t state_count() const noexcept { return state_.size(); }
  bool has_state(const std::string& name) const { return state_.contains(name); }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  std::map<std::string, Moments> state_;
  std::size_t t_ = 0;
};

// -log p[label] for a probability row.
double cross_entropy(std::span<const double> probabilities, int label);
// Batch mean of -log p[label]; probabilities is [B x K] row-major.
double cross_entropy(std::span<const double> probabilities, std::span<const int> labels, std::size_t classes);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double lr = 0.0;        // rate used by the last step of the epoch
  double train_uar = 0.0;
  double train_war = 0.0;
  std::optional<double> val_uar;
  std::optional<double> val_war;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t steps = 0;
};

struct TrainOptions {
  // When set, receives init.clpe, model.clpe, history.csv and trainlog.jsonl.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const EpochRecord&)> on_epoch;
};

template <typename T>
TrainHistory train(ClaipModel<T>& model, std::span<const PreparedClip<T>> clips, std::span<const std::size_t> train_idx,
                   std::span<const std::size_t> val_idx, const TrainConfig& cfg, const TrainOptions& opts = {});

// history.csv columns: epoch, loss, lr, uar, war (validation metrics when present, else training).
void write_history_csv(const TrainHistory& h, const std::filesystem::path& path);
void write_trainlog_jsonl(const TrainHistory& h, const std::filesystem::path& path);

// Throws FoldLeakageError when a clip index appears in both splits.
void check_disjoint(std::span<const std::size_t> train_idx, std::span<const std::size_t> eval_idx);

// Batched eval-mode predictions in index order.
template <typename T>
std::vector<int> predict_indices(ClaipModel<T>& model, std::span<const PreparedClip<T>> clips,
                                 std::span<const std::size_t> idx, std::size_t batch = 64);

}  // namespace claip
