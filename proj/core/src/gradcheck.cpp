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

#include "claip/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "claip/error.hpp"
#include "claip/ops.hpp"

namespace claip {

GradcheckReport gradcheck(ModelConfig cfg, std::span<const ClipSample> clips, std::size_t max_probes, double step,
                          std::uint64_t seed) {
  if (clips.empty()) throw DataError("gradcheck needs at least one clip");
  cfg.lora_dropout = 0.0;
  ClaipModel<double> model(cfg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.1);
  model.visit([&](const std::string& name, Tensor<double>& t) {
    if (name.ends_with(".B")) {
      for (double& v : t.data()) v = noise(rng);
    }
  });

  std::vector<PreparedClip<double>> prepared;
  for (const auto& c : clips) prepared.push_back(model.prepare(c));
  std::vector<const PreparedClip<double>*> batch;
  std::vector<int> labels;
  for (const auto& p : prepared) {
    batch.push_back(&p);
    labels.push_back(p.label);
  }
  auto loss_value = [&] {
    Tape<double> tape;
    ForwardContext ctx;
    auto out = model.forward(tape, batch, ctx);
    return ops::cross_entropy_with_logits(out.logits, std::span<const int>(labels)).value().item();
  };

  const auto params = model.trainable_parameters();
  {
    Tape<double> tape;
    ForwardContext ctx;
    auto out = model.forward(tape, batch, ctx);
    tape.backward(ops::cross_entropy_with_logits(out.logits, std::span<const int>(labels)));
  }

  GradcheckReport report;
  for (const auto& [name, p] : params) {
    TensorGradcheck tg;
    tg.name = name;
    const std::size_t n = p->size();
    const std::size_t probes = std::min(n, max_probes);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t j = 0; j < probes; ++j) {
      const std::size_t i = probes == n ? j : pick(rng);
      const double analytic = p->has_grad() ? p->grad()[i] : 0.0;
      const double orig = p->data()[i];
      p->data()[i] = orig + step;
      const double up = loss_value();
      p->data()[i] = orig - step;
      const double down = loss_value();
      p->data()[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      tg.max_rel_error = std::max(tg.max_rel_error, rel);
      ++tg.probed;
    }
    report.max_rel_error = std::max(report.max_rel_error, tg.max_rel_error);
    report.tensors.push_back(tg);
  }
  return report;
}

void write_gradcheck_json(const GradcheckReport& r, const std::filesystem::path& path) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : r.tensors) {
    tensors.push_back({{"name", t.name}, {"probed", t.probed}, {"max_rel_error", t.max_rel_error}});
  }
  std::ofstream os(path);
  os << nlohmann::json{{"passed", r.passed()},
                       {"tolerance", r.tolerance},
                       {"max_rel_error", r.max_rel_error},
                       {"tensors", tensors}}
            .dump(2)
     << '\n';
  if (!os) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

}  // namespace claip
