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

// Throughput of the hot paths: GEMM, attention, the log-mel frontend and one
// training step of the tiny model.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "claip/audio.hpp"
#include "claip/config.hpp"
#include "claip/data.hpp"
#include "claip/evaluation.hpp"
#include "claip/model.hpp"
#include "claip/ops.hpp"

using namespace claip;

namespace {

Tensor<float> random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor<float> t(std::move(shape));
  fill_normal(t, 1.0, rng);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) {
    Tape<float> tape;
    benchmark::DoNotOptimize(ops::matmul(tape.constant(a), tape.constant(b)).value().ptr());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_Attention(benchmark::State& state) {
  const auto seq = static_cast<std::size_t>(state.range(0));
  const std::size_t batch = 8, d = 128, heads = 4;
  const auto q = random_tensor({batch * seq, d}, 3), k = random_tensor({batch * seq, d}, 4),
             v = random_tensor({batch * seq, d}, 5);
  for (auto _ : state) {
    Tape<float> tape;
    auto out = ops::attention(tape.constant(q), tape.constant(k), tape.constant(v), seq, heads);
    benchmark::DoNotOptimize(out.value().ptr());
  }
}
BENCHMARK(BM_Attention)->Arg(17)->Arg(65);

void BM_LogMel(benchmark::State& state) {
  audio::AudioFrontend fe(audio::AudioConfig{});
  audio::Waveform w;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  w.samples.resize(static_cast<std::size_t>(state.range(0)));
  for (float& s : w.samples) s = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(fe(w).frames.ptr());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LogMel)->Arg(16000);

void BM_TrainStep(benchmark::State& state) {
  RunConfig run = preset_config("tiny");
  run.data.clips_per_class = 3;
  run.resolve();
  const Dataset ds = generate(run.data);
  ClaipModel<float> model(run.model);
  const auto clips = prepare_all<float>(run.model, ds.clips);
  std::vector<const PreparedClip<float>*> batch;
  std::vector<int> labels;
  for (std::size_t i = 0; i < 16 && i < clips.size(); ++i) {
    batch.push_back(&clips[i]);
    labels.push_back(clips[i].label);
  }
  std::mt19937_64 rng(7);
  for (auto _ : state) {
    Tape<float> tape;
    ForwardContext ctx{true, &rng};
    auto out = model.forward(tape, batch, ctx);
    tape.backward(ops::cross_entropy_with_logits(out.logits, std::span<const int>(labels)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
