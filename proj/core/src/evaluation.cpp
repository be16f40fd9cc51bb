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

#include "claip/evaluation.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "claip/error.hpp"

namespace claip {

FoldReport evaluate_predictions(std::size_t fold, std::size_t classes, std::span<const int> labels,
                                std::span<const int> predictions) {
  FoldReport r;
  r.fold = fold;
  r.confusion = ConfusionMatrix(classes);
  r.confusion.add(labels, predictions);
  const RecallSummary s = uar_war(r.confusion);
  r.uar = s.uar;
  r.war = s.war;
  return r;
}

template <typename T>
FoldReport evaluate(ClaipModel<T>& model, std::span<const PreparedClip<T>> clips, std::span<const std::size_t> eval_idx,
                    std::size_t fold, std::span<const std::size_t> train_idx) {
  check_disjoint(train_idx, eval_idx);
  if (eval_idx.empty()) throw DataError(fmt::format("fold {} has no evaluation clips", fold));
  const std::vector<int> preds = predict_indices(model, clips, eval_idx);
  std::vector<int> labels;
  labels.reserve(eval_idx.size());
  for (std::size_t i : eval_idx) labels.push_back(clips[i].label);
  FoldReport r = evaluate_predictions(fold, model.config().classes, labels, preds);
  const ParamReport p = model.count_params();
  r.trainable = p.trainable;
  r.total = p.total;
  r.ratio = p.ratio;
  return r;
}

CrossValidation summarize(std::vector<FoldReport> folds) {
  CrossValidation cv;
  cv.folds = std::move(folds);
  if (cv.folds.empty()) return cv;
  const double n = static_cast<double>(cv.folds.size());
  for (const auto& f : cv.folds) {
    cv.mean_uar += f.uar;
    cv.mean_war += f.war;
  }
  cv.mean_uar /= n;
  cv.mean_war /= n;
  for (const auto& f : cv.folds) {
    cv.std_uar += (f.uar - cv.mean_uar) * (f.uar - cv.mean_uar);
    cv.std_war += (f.war - cv.mean_war) * (f.war - cv.mean_war);
  }
  cv.std_uar = std::sqrt(cv.std_uar / n);
  cv.std_war = std::sqrt(cv.std_war / n);
  return cv;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

template <typename T>
CrossValidation cross_validate(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                               std::span<const PreparedClip<T>> clips, const FoldAssignment& folds,
                               const CrossValidateOptions& opts) {
  std::vector<std::size_t> which = opts.folds;
  if (which.empty()) {
    for (std::size_t f = 0; f < folds.size(); ++f) which.push_back(f);
  }
  for (std::size_t f : which) {
    if (f >= folds.size()) throw DataError(fmt::format("fold {} outside {} folds", f, folds.size()));
  }
  std::vector<FoldReport> reports(which.size());
  parallel_for(which.size(), opts.threads, [&](std::size_t slot) {
    const std::size_t f = which[slot];
    const std::vector<std::size_t> train_idx = complement(folds, f);
    ClaipModel<T> model(model_cfg);
    TrainConfig tc = train_cfg;
    tc.seed = derive_seed(train_cfg.seed, f);
    TrainOptions to;
    if (opts.out_dir) to.out_dir = *opts.out_dir / fmt::format("fold_{}", f);
    if (opts.on_epoch) to.on_epoch = [&opts, f](const EpochRecord& r) { opts.on_epoch(f, r); };
    train(model, clips, train_idx, {}, tc, to);
    reports[slot] = evaluate(model, clips, folds[f], f, train_idx);
  });
  return summarize(std::move(reports));
}

template <typename T>
std::vector<PreparedClip<T>> prepare_all(const ModelConfig& cfg, std::span<const ClipSample> clips,
                                         std::size_t threads) {
  const audio::AudioFrontend frontend(cfg.frontend);
  std::vector<PreparedClip<T>> out(clips.size());
  parallel_for(clips.size(), threads, [&](std::size_t i) { out[i] = prepare_clip<T>(cfg, frontend, clips[i]); });
  return out;
}

void write_report_csv(const CrossValidation& cv, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  os << "fold,uar,war,trainable_M,ratio\n";
  double trainable = 0.0, ratio = 0.0;
  for (const auto& f : cv.folds) {
    os << fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f}\n", f.fold, f.uar, f.war, f.trainable / 1e6, f.ratio);
    trainable = f.trainable / 1e6;
    ratio = f.ratio;
  }
  os << fmt::format("mean,{:.6f},{:.6f},{:.6f},{:.6f}\n", cv.mean_uar, cv.mean_war, trainable, ratio);
  os << fmt::format("std,{:.6f},{:.6f},0,0\n", cv.std_uar, cv.std_war);
  if (!os) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

template <typename T>
void export_features(ClaipModel<T>& model, std::span<const PreparedClip<T>> clips, const std::filesystem::path& path,
                     std::size_t batch) {
  std::ofstream os(path);
  if (!os) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  std::vector<const PreparedClip<T>*> ptrs;
  bool header = false;
  for (std::size_t s = 0; s < clips.size(); s += batch) {
    ptrs.clear();
    for (std::size_t i = s; i < std::min(clips.size(), s + batch); ++i) ptrs.push_back(&clips[i]);
    Tape<T> tape;
    ForwardContext ctx;
    const Tensor<T> z = model.forward(tape, ptrs, ctx).fused.value();
    const std::size_t width = z.dim(1);
    if (!header) {
      os << "id,label";
      for (std::size_t j = 0; j < width; ++j) os << ",z" << j;
      os << '\n';
      header = true;
    }
    for (std::size_t b = 0; b < ptrs.size(); ++b) {
      os << ptrs[b]->id << ',' << ptrs[b]->label;
      for (std::size_t j = 0; j < width; ++j) os << fmt::format(",{:.9g}", static_cast<double>(z.at(b, j)));
      os << '\n';
    }
  }
  if (!os) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

#define CLAIP_INSTANTIATE(T)                                                                                        \
  template FoldReport evaluate(ClaipModel<T>&, std::span<const PreparedClip<T>>, std::span<const std::size_t>,     \
                               std::size_t, std::span<const std::size_t>);                                          \
  template CrossValidation cross_validate(const ModelConfig&, const TrainConfig&, std::span<const PreparedClip<T>>, \
                                          const FoldAssignment&, const CrossValidateOptions&);                     \
  template std::vector<PreparedClip<T>> prepare_all(const ModelConfig&, std::span<const ClipSample>, std::size_t);  \
  template void export_features(ClaipModel<T>&, std::span<const PreparedClip<T>>, const std::filesystem::path&,    \
                                std::size_t);

CLAIP_INSTANTIATE(float)
CLAIP_INSTANTIATE(double)
#undef CLAIP_INSTANTIATE

}  // namespace claip
