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

#include "claip/ablation.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>

#include <fmt/format.h>

#include "claip/error.hpp"

namespace claip {

std::vector<AblationArm> ablation_grid(const RunConfig& base) {
  std::vector<AblationArm> arms;
  auto add = [&](std::string group, std::string name, auto&& edit) {
    RunConfig c = base;
    edit(c.model);
    arms.push_back({std::move(group), std::move(name), std::move(c)});
  };
  for (std::size_t r : {0, 2, 4, 8, 16}) {
    add("rank", fmt::format("r={}", r), [r](ModelConfig& m) {
      m.full_finetune = false;
      m.lora_rank = r;
    });
  }
  add("rank", "full", [](ModelConfig& m) { m.full_finetune = true; });
  const std::pair<AggregationMode, AggregationMode> aggs[] = {{AggregationMode::Mean, AggregationMode::Mean},
                                                               {AggregationMode::Transformer, AggregationMode::Mean},
                                                               {AggregationMode::Transformer, AggregationMode::Transformer}};
  for (const auto& [v, a] : aggs) {
    add("aggregation", fmt::format("V:{}/A:{}", v == AggregationMode::Mean ? "mean" : "trans",
                                   a == AggregationMode::Mean ? "mean" : "trans"),
        [v, a](ModelConfig& m) {
          m.agg_visual = v;
          m.agg_audio = a;
        });
  }
  for (FusionMode f : {FusionMode::ConcatLinear, FusionMode::Additive, FusionMode::Gated}) {
    add("fusion", to_string(f), [f](ModelConfig& m) { m.fusion = f; });
  }
  for (Modality mo : {Modality::A, Modality::V, Modality::AV}) {
    add("modality", to_string(mo), [mo](ModelConfig& m) { m.modality = mo; });
  }
  return arms;
}

std::vector<AblationRow> run_ablation(const RunConfig& base, std::span<const ClipSample> clips,
                                      const FoldAssignment& folds, const AblationOptions& opts) {
  std::vector<AblationArm> arms = ablation_grid(base);
  if (!opts.only.empty()) {
    std::erase_if(arms, [&opts](const AblationArm& a) {
      return std::find(opts.only.begin(), opts.only.end(), a.name) == opts.only.end() &&
             std::find(opts.only.begin(), opts.only.end(), a.group) == opts.only.end();
    });
  }

  // One prepared copy serves every arm: modality only decides which inputs the forward pass reads.
  RunConfig prep = base;
  prep.model.modality = Modality::AV;
  prep.resolve();
  const std::vector<PreparedClip<float>> prepared = prepare_all<float>(prep.model, clips, opts.threads);

  std::map<std::string, std::size_t> unique_index;
  std::vector<std::size_t> owner(arms.size());
  std::vector<std::size_t> unique;
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const auto [it, fresh] = unique_index.emplace(serialize(arms[i].config), unique.size());
    if (fresh) unique.push_back(i);
    owner[i] = it->second;
  }

  std::vector<AblationRow> results(unique.size());
  parallel_for(unique.size(), opts.threads, [&](std::size_t u) {
    AblationRow row;
    RunConfig cfg = arms[unique[u]].config;
    try {
      cfg.resolve();
      {
        ClaipModel<float> probe(cfg.model);
        const ParamReport p = probe.count_params();
        row.trainable = p.trainable;
        row.total = p.total;
        row.ratio = p.ratio;
      }
      const CrossValidation cv = cross_validate<float>(cfg.model, cfg.train, prepared, folds);
      row.uar = cv.mean_uar;
      row.uar_std = cv.std_uar;
      row.war = cv.mean_war;
      row.war_std = cv.std_war;
      row.ok = true;
    } catch (const Error& e) {
      row.error = fmt::format("{}: {}", e.kind(), e.what());
    } catch (const std::exception& e) {
      row.error = fmt::format("InternalError: {}", e.what());
    }
    results[u] = std::move(row);
  });

  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < arms.size(); ++i) {
    AblationRow row = results[owner[i]];
    row.group = arms[i].group;
    row.arm = arms[i].name;
    if (opts.on_row) opts.on_row(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(std::span<const AblationRow> rows, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  os << "group,arm,status,uar,uar_std,war,war_std,trainable,total,ratio,error\n";
  for (const auto& r : rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    os << fmt::format("{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{},{},{:.6f},{}\n", r.group, r.arm, r.ok ? "ok" : "failed",
                      r.uar, r.uar_std, r.war, r.war_std, r.trainable, r.total, r.ratio, err);
  }
  if (!os) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

void write_ablation_markdown(std::span<const AblationRow> rows, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  os << "| group | arm | UAR (%) | WAR (%) | trainable | ratio (%) | status |\n";
  os << "|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    if (r.ok) {
      os << fmt::format("| {} | {} | {:.2f} ± {:.2f} | {:.2f} ± {:.2f} | {} | {:.2f} | ok |\n", r.group, r.arm,
                        100 * r.uar, 100 * r.uar_std, 100 * r.war, 100 * r.war_std, r.trainable, 100 * r.ratio);
    } else {
      std::string err = r.error;
      std::replace(err.begin(), err.end(), '|', '/');
      os << fmt::format("| {} | {} | - | - | {} | {:.2f} | failed: {} |\n", r.group, r.arm, r.trainable,
                        100 * r.ratio, err);
    }
  }
  if (!os) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

}  // namespace claip
