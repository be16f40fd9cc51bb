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

#include <cmath>
#include <map>
#include <random>
#include <vector>

#include <doctest.h>

#include "claip/aggregation.hpp"
#include "claip/error.hpp"
#include "claip/ops.hpp"
#include "fixtures.hpp"

using namespace claip;
using T64 = Tensor<double>;

namespace {

T64 random_seq(std::size_t b, std::size_t t, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  T64 x(Shape{b, t, d});
  fill_normal(x, 1.0, rng);
  return x;
}

T64 permute_rows(const T64& x, const std::vector<std::size_t>& perm) {
  const std::size_t b = x.dim(0), t = x.dim(1), d = x.dim(2);
  T64 y(x.shape());
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t k = 0; k < d; ++k) y[(i * t + j) * d + k] = x[(i * t + perm[j]) * d + k];
  return y;
}

T64 aggregate(SequenceAggregator<double>& agg, const T64& x) {
  Tape<double> tape;
  ForwardContext ctx;
  return agg.forward(tape, tape.constant(x), ctx).value();
}

T64 probabilities(const T64& logits) {
  Tape<double> tape;
  return ops::softmax(tape.constant(logits), 1).value();
}

std::map<std::string, Tensor<double>*> tensors_of(FusionHead<double>& head) {
  std::map<std::string, Tensor<double>*> m;
  head.visit("h", [&](const std::string& n, Tensor<double>& t) { m[n] = &t; });
  return m;
}

}  // namespace

TEST_SUITE("aggregation") {
  TEST_CASE("mean pooling of two rows") {
    SequenceAggregator<double> agg(AggregationMode::Mean, 2, 2, 1, 1, 0);
    const auto y = aggregate(agg, T64(Shape{1, 2, 2}, {1, 0, 0, 1}));
    CHECK(y.storage() == Buffer<double>{0.5, 0.5});
  }

  TEST_CASE("temporal transformer without positions is frame-permutation invariant") {
    SequenceAggregator<double> agg(AggregationMode::Transformer, 6, 16, 2, 2, 5);
    std::fill(agg.temporal()->pos().storage().begin(), agg.temporal()->pos().storage().end(), 0.0);
    const auto x = random_seq(3, 6, 16, 1);
    const auto a = aggregate(agg, x);
    for (const auto& perm : {std::vector<std::size_t>{5, 4, 3, 2, 1, 0}, std::vector<std::size_t>{1, 3, 5, 0, 2, 4}})
      CHECK(max_abs_diff(a, aggregate(agg, permute_rows(x, perm))) < 1e-6);
  }

  TEST_CASE("temporal transformer with positions sees order") {
    SequenceAggregator<double> agg(AggregationMode::Transformer, 6, 16, 2, 2, 5);
    const auto x = random_seq(2, 6, 16, 2);
    CHECK(max_abs_diff(aggregate(agg, x), aggregate(agg, permute_rows(x, {5, 4, 3, 2, 1, 0}))) > 1e-6);
  }

  TEST_CASE("sequence length mismatch is an error") {
    SequenceAggregator<double> agg(AggregationMode::Transformer, 4, 8, 2, 2, 0);
    CHECK_THROWS_AS(aggregate(agg, random_seq(1, 3, 8, 0)), ShapeError);
    SequenceAggregator<double> mean(AggregationMode::Mean, 4, 8, 2, 2, 0);
    CHECK_THROWS_AS(aggregate(mean, random_seq(1, 3, 8, 0)), ShapeError);
  }

  TEST_CASE("audio mean pooling contract") {
    auto pool = [](std::size_t steps) { return SequenceAggregator<double>(AggregationMode::Mean, steps, 8, 2, 2, 0); };
    auto agg = pool(5);
    std::size_t params = 0;
    agg.visit("agg", [&](const std::string&, Tensor<double>& t) { params += t.size(); });
    CHECK(params == 0);

    T64 same(Shape{1, 5, 8});
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t k = 0; k < 8; ++k) same[i * 8 + k] = double(k) - 2.5;
    const auto ys = aggregate(agg, same);
    for (std::size_t k = 0; k < 8; ++k) CHECK(ys[k] == double(k) - 2.5);

    auto single = pool(1);
    const auto one = random_seq(2, 1, 8, 3);
    CHECK(bitwise_equal(aggregate(single, one), one.reshaped(Shape{2, 8})));

    auto seven = pool(7);
    const auto x = random_seq(2, 7, 8, 4);
    const auto a = aggregate(seven, x);
    CHECK(max_abs_diff(a, aggregate(seven, permute_rows(x, {6, 0, 5, 1, 4, 2, 3}))) <= 1e-15);

    T64 scaled = x;
    for (auto& v : scaled.storage()) v *= 2.0;
    const auto b = aggregate(seven, scaled);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == 2.0 * a[i]);

    auto empty = pool(0);
    CHECK_THROWS_AS(aggregate(empty, T64(Shape{1, 0, 8})), ShapeError);
  }

  TEST_CASE("zero classifier gives a uniform prediction") {
    FusionHead<double> head(FusionMode::ConcatLinear, 128, 128, 7, 1);
    auto m = tensors_of(head);
    CHECK(m.at("h.W_c")->shape() == Shape{7, 256});
    CHECK(head.fused_width() == 256);
    std::fill(m.at("h.W_c")->storage().begin(), m.at("h.W_c")->storage().end(), 0.0);
    std::fill(m.at("h.b_c")->storage().begin(), m.at("h.b_c")->storage().end(), 0.0);
    Tape<double> tape;
    const auto out = head.forward(tape, tape.constant(random_seq(1, 1, 128, 1).reshaped({1, 128})),
                                  tape.constant(random_seq(1, 1, 128, 2).reshaped({1, 128})));
    const auto p = probabilities(out.logits.value());
    for (double v : p.data()) CHECK(v == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  }

  TEST_CASE("head dimension mismatch is an error") {
    FusionHead<double> head(FusionMode::Additive, 16, 12, 5, 1);
    Tape<double> tape;
    CHECK_THROWS_AS(head.forward(tape, tape.constant(T64(Shape{2, 12})), tape.constant(T64(Shape{2, 12}))), ShapeError);
    CHECK(head.fused_width() == 12);
  }

  TEST_CASE("gate forced to one keeps only the visual path") {
    FusionHead<double> head(FusionMode::Gated, 16, 12, 5, 3);
    head.force_gate(1.0);
    auto m = tensors_of(head);
    const auto zv = random_seq(1, 3, 16, 4).reshaped({3, 16});
    const auto za = random_seq(1, 3, 12, 5).reshaped({3, 12});
    const auto za2 = random_seq(1, 3, 12, 6).reshaped({3, 12});
    Tape<double> tape;
    const auto a = head.forward(tape, tape.constant(zv), tape.constant(za)).logits.value();
    const auto b = head.forward(tape, tape.constant(zv), tape.constant(za2)).logits.value();
    CHECK(max_abs_diff(a, b) < 1e-12);
    // Visual-only path: W (P_V z_V + b_V) + b.
    Tape<double> t2;
    auto pv = ops::linear(t2.constant(zv), t2.constant(*m.at("h.proj_v.weight")), t2.constant(*m.at("h.proj_v.bias")));
    const auto ref = ops::linear(pv, t2.constant(*m.at("h.W_c")), t2.constant(*m.at("h.b_c"))).value();
    CHECK(max_abs_diff(a, ref) < 1e-12);
  }

  TEST_CASE("every head mode yields normalized, shift-invariant predictions") {
    for (auto mode : {FusionMode::ConcatLinear, FusionMode::Additive, FusionMode::Gated}) {
      FusionHead<double> head(mode, 16, 8, 7, 7);
      Tape<double> tape;
      const auto logits = head.forward(tape, tape.constant(random_seq(1, 5, 16, 8).reshaped({5, 16})),
                                       tape.constant(random_seq(1, 5, 8, 9).reshaped({5, 8})))
                              .logits.value();
      const auto p = probabilities(logits);
      T64 shifted = logits;
      for (auto& v : shifted.storage()) v += 12.5;
      const auto q = probabilities(shifted);
      for (std::size_t r = 0; r < 5; ++r) {
        double s = 0;
        std::size_t ap = 0, aq = 0;
        for (std::size_t k = 0; k < 7; ++k) {
          s += p.at(r, k);
          if (p.at(r, k) > p.at(r, ap)) ap = k;
          if (q.at(r, k) > q.at(r, aq)) aq = k;
        }
        CHECK(std::abs(s - 1.0) < 1e-6);
        CHECK(ap == aq);
      }
    }
  }

  TEST_CASE("parse and print mode names") {
    CHECK(parse_aggregation("transformer") == AggregationMode::Transformer);
    CHECK(parse_aggregation("mean") == AggregationMode::Mean);
    CHECK(parse_fusion("concat_linear") == FusionMode::ConcatLinear);
    CHECK(parse_fusion("gated") == FusionMode::Gated);
    CHECK(parse_modality("AV") == Modality::AV);
    CHECK(to_string(FusionMode::Additive) == "additive");
    CHECK_THROWS_AS(parse_modality("VA"), ConfigError);
  }

  TEST_CASE("a single modality never runs the other branch") {
    auto run = fixture::tiny_run(1);
    const auto ds = generate(run.data);
    SUBCASE("video only") {
      run.model.modality = Modality::V;
      ClaipModel<float> m(run.model);
      std::vector<PreparedClip<float>> clips;
      for (const auto& c : ds.clips) clips.push_back(m.prepare(c));
      m.predict(fixture::pointers(clips));
      CHECK(m.frontend().calls() == 0);
      CHECK(m.audio_encoder() == nullptr);
      CHECK(m.visual_encoder()->calls() > 0);
    }
    SUBCASE("audio only") {
      run.model.modality = Modality::A;
      ClaipModel<float> m(run.model);
      std::vector<PreparedClip<float>> clips;
      for (const auto& c : ds.clips) clips.push_back(m.prepare(c));
      m.predict(fixture::pointers(clips));
      CHECK(m.frontend().calls() == clips.size());
      CHECK(m.visual_encoder() == nullptr);
      CHECK(m.audio_encoder()->calls() > 0);
      CHECK(clips[0].frame_patches.empty());
    }
  }

  TEST_CASE("aggregator trainables order mean/mean < trans/mean < trans/trans") {
    auto count = [](AggregationMode v, AggregationMode a) {
      auto run = fixture::tiny_run(1);
      run.model.agg_visual = v;
      run.model.agg_audio = a;
      ClaipModel<float> m(run.model);
      return std::make_pair(m.count_params().trainable, m.count_params().group("aggregator").trainable);
    };
    const auto mm = count(AggregationMode::Mean, AggregationMode::Mean);
    const auto tm = count(AggregationMode::Transformer, AggregationMode::Mean);
    const auto tt = count(AggregationMode::Transformer, AggregationMode::Transformer);
    CHECK(mm.second == 0);
    CHECK(mm.first < tm.first);
    CHECK(tm.first < tt.first);
  }
}
