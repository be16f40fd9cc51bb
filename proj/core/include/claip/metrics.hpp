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
#include <span>
#include <vector>

namespace claip {

// Rows are true labels, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);

  void add(int label, int prediction);
  void add(std::span<const int> labels, std::span<const int> predictions);

  std::size_t classes() const noexcept { return classes_; }
  std::size_t at(std::size_t label, std::size_t prediction) const { return counts_[label * classes_ + prediction]; }
  std::size_t& at(std::size_t label, std::size_t prediction) { return counts_[label * classes_ + prediction]; }
  std::size_t row_sum(std::size_t label) const;
  std::size_t trace() const;
  std::size_t total() const;

 private:
  std::size_t classes_;
  std::vector<std::size_t> counts_;
};

struct RecallSummary {
  double uar = 0.0;  // mean recall over classes present in the evaluation set
  double war = 0.0;  // overall accuracy
  std::vector<std::size_t> absent_classes;
};

// Classes with no samples are excluded from UAR; a warning goes to stderr when warn is set.
RecallSummary uar_war(const ConfusionMatrix& cm, bool warn = true);

}  // namespace claip
