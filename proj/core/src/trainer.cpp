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

#include "claip/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <unordered_set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "claip/error.hpp"
#include "claip/metrics.hpp"
#include "claip/ops.hpp"

namespace claip {

std::size_t TrainConfig::resolved_warmup() const {
  if (warmup_epochs) return *warmup_epochs;
  if (epochs <= 1) return 0;
  return std::min(std::max<std::size_t>(1, epochs * 5 / 100), epochs - 1);
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(lr_peak >= 0.0) || !(lr_min >= 0.0)) throw ConfigError("learning rates must be non-negative");
  if (lr_min > lr_peak) throw ConfigError(fmt::format("train.lr_min {} exceeds train.lr_peak {}", lr_min, lr_peak));
  if (epochs > 0 && resolved_warmup() >= epochs) {
    throw ConfigError(fmt::format("train.warmup_epochs {} must be below train.epochs {}", resolved_warmup(), epochs));
  }
  if (adam.beta1 < 0.0 || adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0 || !(adam.eps > 0.0)) {
    throw ConfigError("adam betas must lie in [0, 1) and eps must be positive");
  }
  if (grad_clip < 0.0) throw ConfigError("train.grad_clip must be non-negative");
}

CosineSchedule::CosineSchedule(std::size_t total_steps, std::size_t warmup_steps, double peak, double lr_min)
    : total_(total_steps), warmup_(warmup_steps), peak_(peak), min_(lr_min) {
  if (warmup_ > total_) throw ConfigError(fmt::format("warmup {} exceeds {} total steps", warmup_, total_));
  if (lr_min > peak) throw ConfigError("lr_min exceeds lr_peak");
}

double CosineSchedule::lr_at(std::size_t step) const {
  if (step > total_) throw ConfigError(fmt::format("step {} beyond schedule end {}", step, total_));
  if (step < warmup_) return peak_ * static_cast<double>(step) / static_cast<double>(warmup_);
  if (total_ == warmup_) return peak_;
  const double progress = static_cast<double>(step - warmup_) / static_cast<double>(total_ - warmup_);
  return min_ + 0.5 * (peak_ - min_) * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
void Adam<T>::step(const ParamList<T>& params, double lr) {
  for (const auto& [name, p] : params) {
    if (!p->requires_grad() || !p->has_grad()) continue;
    for (T g : p->grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError(fmt::format("non-finite gradient in tensor '{}'", name));
      }
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& [name, p] : params) {
    if (!p->requires_grad()) continue;
    Moments& st = state_[name];
    if (st.m.empty()) {
      st.m.assign(p->size(), 0.0);
      st.v.assign(p->size(), 0.0);
    }
    T* w = p->ptr();
    const T* g = p->has_grad() ? p->grad().data() : nullptr;
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double gi = g ? static_cast<double>(g[i]) : 0.0;
      st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * gi;
      st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = st.m[i] / c1;
      const double vhat = st.v[i] / c2;
      w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

double cross_entropy(std::span<const double> probabilities, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= probabilities.size()) {
    throw DataError(fmt::format("label {} outside [0, {})", label, probabilities.size()));
  }
  return -std::log(probabilities[static_cast<std::size_t>(label)]);
}

double cross_entropy(std::span<const double> probabilities, std::span<const int> labels, std::size_t classes) {
  if (labels.empty() || probabilities.size() != labels.size() * classes) {
    throw ShapeError(fmt::format("{} probabilities do not form {} rows of {}", probabilities.size(), labels.size(),
                                 classes));
  }
  double total = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) total += cross_entropy(probabilities.subspan(b * classes, classes), labels[b]);
  return total / static_cast<double>(labels.size());
}

void check_disjoint(std::span<const std::size_t> train_idx, std::span<const std::size_t> eval_idx) {
  const std::unordered_set<std::size_t> seen(train_idx.begin(), train_idx.end());
  for (std::size_t i : eval_idx) {
    if (seen.contains(i)) throw FoldLeakageError(fmt::format("clip index {} is in both the training and evaluation split", i));
  }
}

template <typename T>
std::vector<int> predict_indices(ClaipModel<T>& model, std::span<const PreparedClip<T>> clips,
                                 std::span<const std::size_t> idx, std::size_t batch) {
  std::vector<int> out;
  out.reserve(idx.size());
  std::vector<const PreparedClip<T>*> ptrs;
  for (std::size_t s = 0; s < idx.size(); s += batch) {
    ptrs.clear();
    for (std::size_t i = s; i < std::min(idx.size(), s + batch); ++i) ptrs.push_back(&clips[idx[i]]);
    const auto pred = model.predict(ptrs);
    out.insert(out.end(), pred.begin(), pred.end());
  }
  return out;
}

namespace {

template <typename T>
RecallSummary split_metrics(std::size_t classes, std::span<const PreparedClip<T>> clips,
                            std::span<const std::size_t> idx, std::span<const int> preds) {
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < idx.size(); ++i) cm.add(clips[idx[i]].label, preds[i]);
  return uar_war(cm, false);
}

template <typename T>
void clip_gradients(const ParamList<T>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [n, p] : params) {
    if (!p->has_grad()) continue;
    for (T g : p->grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm)) return;
  const T factor = static_cast<T>(max_norm / norm);
  for (const auto& [n, p] : params) {
    if (!p->has_grad()) continue;
    for (T& g : p->grad()) g *= factor;
  }
}

std::string fmt_opt(const std::optional<double>& v, double fallback) { return fmt::format("{:.17g}", v.value_or(fallback)); }

}  // namespace

template <typename T>
TrainHistory train(ClaipModel<T>& model, std::span<const PreparedClip<T>> clips, std::span<const std::size_t> train_idx,
                   std::span<const std::size_t> val_idx, const TrainConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  check_disjoint(train_idx, val_idx);
  for (std::size_t i : train_idx) {
    if (i >= clips.size()) throw DataError(fmt::format("training index {} outside {} clips", i, clips.size()));
  }
  for (std::size_t i : val_idx) {
    if (i >= clips.size()) throw DataError(fmt::format("validation index {} outside {} clips", i, clips.size()));
  }
  if (cfg.epochs > 0 && train_idx.empty()) throw DataError("empty training split");

  if (opts.out_dir) {
    std::filesystem::create_directories(*opts.out_dir);
    model.save(*opts.out_dir / "init.clpe");
  }

  const std::size_t classes = model.config().classes;
  const std::size_t steps_per_epoch = (train_idx.size() + cfg.batch_size - 1) / cfg.batch_size;
  const CosineSchedule schedule(cfg.epochs * steps_per_epoch, cfg.resolved_warmup() * steps_per_epoch, cfg.lr_peak,
                                cfg.lr_min);
  const ParamList<T> params = model.trainable_parameters();
  Adam<T> adam(cfg.adam);
  std::mt19937_64 order_rng(derive_seed(cfg.seed, 0));
  std::mt19937_64 dropout_rng(derive_seed(cfg.seed, 1));

  std::vector<std::pair<std::string, std::uint32_t>> frozen_crc;
  if (cfg.verify_frozen) {
    model.visit([&frozen_crc](const std::string& n, Tensor<T>& t) {
      if (!t.requires_grad()) frozen_crc.emplace_back(n, checksum(t));
    });
  }

  TrainHistory history;
  std::vector<std::size_t> order(train_idx.begin(), train_idx.end());
  std::vector<Tensor<T>> last_good(params.size());
  std::vector<const PreparedClip<T>*> batch;
  std::vector<int> labels, train_preds(order.size());
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < params.size(); ++i) last_good[i] = *params[i].second;
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), s + cfg.batch_size);
      batch.clear();
      labels.clear();
      for (std::size_t i = s; i < e; ++i) {
        batch.push_back(&clips[order[i]]);
        labels.push_back(clips[order[i]].label);
      }
      Tape<T> tape;
      ForwardContext ctx{true, &dropout_rng};
      auto out = model.forward(tape, batch, ctx);
      Var<T> loss = ops::cross_entropy_with_logits(out.logits, std::span<const int>(labels));
      const double lv = static_cast<double>(loss.value().item());
      if (!std::isfinite(lv)) {
        for (std::size_t i = 0; i < params.size(); ++i) *params[i].second = last_good[i];
        if (opts.out_dir) model.save(*opts.out_dir / "model.clpe");
        throw NumericError(fmt::format("non-finite loss at epoch {} step {}; restored the epoch-start snapshot",
                                       epoch, step));
      }
      const Tensor<T>& z = out.logits.value();
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const T* row = z.ptr() + b * classes;
        train_preds[s + b] = static_cast<int>(std::max_element(row, row + classes) - row);
      }
      loss_sum += lv * static_cast<double>(batch.size());
      tape.backward(loss);
      if (cfg.grad_clip > 0.0) clip_gradients(params, cfg.grad_clip);
      ++step;
      lr = schedule.lr_at(step);
      try {
        adam.step(params, lr);
      } catch (const NumericError&) {
        for (std::size_t i = 0; i < params.size(); ++i) *params[i].second = last_good[i];
        if (opts.out_dir) model.save(*opts.out_dir / "model.clpe");
        throw;
      }
      for (const auto& [n, p] : params) p->clear_grad();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(order.size());
    rec.lr = lr;
    const RecallSummary tr = split_metrics<T>(classes, clips, order, train_preds);
    rec.train_uar = tr.uar;
    rec.train_war = tr.war;
    if (!val_idx.empty()) {
      const auto vp = predict_indices(model, clips, val_idx);
      const RecallSummary vs = split_metrics<T>(classes, clips, val_idx, vp);
      rec.val_uar = vs.uar;
      rec.val_war = vs.war;
    }
    if (cfg.verify_frozen) {
      std::size_t k = 0;
      model.visit([&](const std::string& n, Tensor<T>& t) {
        if (t.requires_grad()) return;
        if (k >= frozen_crc.size() || frozen_crc[k].first != n || frozen_crc[k].second != checksum(t)) {
          throw StateError(fmt::format("frozen tensor '{}' changed during epoch {}", n, epoch));
        }
        ++k;
      });
    }
    history.epochs.push_back(rec);
    if (opts.on_epoch) opts.on_epoch(rec);
  }
  history.steps = step;

  if (opts.out_dir) {
    model.save(*opts.out_dir / "model.clpe");
    write_history_csv(history, *opts.out_dir / "history.csv");
    write_trainlog_jsonl(history, *opts.out_dir / "trainlog.jsonl");
  }
  return history;
}

void write_history_csv(const TrainHistory& h, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  os << "epoch,loss,lr,uar,war\n";
  for (const auto& r : h.epochs) {
    os << fmt::format("{},{:.17g},{:.17g},{},{}\n", r.epoch, r.loss, r.lr, fmt_opt(r.val_uar, r.train_uar),
                      fmt_opt(r.val_war, r.train_war));
  }
  if (!os) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

void write_trainlog_jsonl(const TrainHistory& h, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  for (const auto& r : h.epochs) {
    nlohmann::json j{{"epoch", r.epoch},         {"loss", r.loss},          {"lr", r.lr},
                     {"train_uar", r.train_uar}, {"train_war", r.train_war}};
    j["val_uar"] = r.val_uar ? nlohmann::json(*r.val_uar) : nlohmann::json(nullptr);
    j["val_war"] = r.val_war ? nlohmann::json(*r.val_war) : nlohmann::json(nullptr);
    os << j.dump() << '\n';
  }
  if (!os) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

#define CLAIP_INSTANTIATE(T)                                                                                    \
  template class Adam<T>;                                                                                       \
  template TrainHistory train(ClaipModel<T>&, std::span<const PreparedClip<T>>, std::span<const std::size_t>,  \
                              std::span<const std::size_t>, const TrainConfig&, const TrainOptions&);          \
  template std::vector<int> predict_indices(ClaipModel<T>&, std::span<const PreparedClip<T>>,                  \
                                            std::span<const std::size_t>, std::size_t);

CLAIP_INSTANTIATE(float)
CLAIP_INSTANTIATE(double)
#undef CLAIP_INSTANTIATE

}  // namespace claip
