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

#include "claip/metrics.hpp"

#include <cstdio>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "claip/error.hpp"

namespace claip {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw ConfigError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(int label, int prediction) {
  const auto k = static_cast<long long>(classes_);
  if (label < 0 || label >= k) throw DataError(fmt::format("label {} outside [0, {})", label, classes_));
  if (prediction < 0 || prediction >= k) {
    throw DataError(fmt::format("prediction {} outside [0, {})", prediction, classes_));
  }
  ++counts_[static_cast<std::size_t>(label) * classes_ + static_cast<std::size_t>(prediction)];
}

void ConfusionMatrix::add(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) {
    throw ShapeError(fmt::format("{} labels but {} predictions", labels.size(), predictions.size()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) add(labels[i], predictions[i]);
}

std::size_t ConfusionMatrix::row_sum(std::size_t label) const {
  const auto row = counts_.begin() + static_cast<std::ptrdiff_t>(label * classes_);
  return std::accumulate(row, row + static_cast<std::ptrdiff_t>(classes_), std::size_t{0});
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t k = 0; k < classes_; ++k) t += at(k, k);
  return t;
}

std::size_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
}

RecallSummary uar_war(const ConfusionMatrix& cm, bool warn) {
  RecallSummary s;
  const std::size_t n = cm.total();
  if (n == 0) throw DataError("cannot compute recall on an empty confusion matrix");
  double recall_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < cm.classes(); ++k) {
    const std::size_t rows = cm.row_sum(k);
    if (rows == 0) {
      s.absent_classes.push_back(k);
      continue;
    }
    recall_sum += static_cast<double>(cm.at(k, k)) / static_cast<double>(rows);
    ++present;
  }
  s.uar = recall_sum / static_cast<double>(present);
  s.war = static_cast<double>(cm.trace()) / static_cast<double>(n);
  if (warn && !s.absent_classes.empty()) {
    fmt::print(stderr, "warning: classes {} have no evaluation samples and are excluded from UAR\n",
               s.absent_classes);
  }
  return s;
}

}  // namespace claip
