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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "claip/audio.hpp"
#include "claip/data.hpp"
#include "claip/error.hpp"
#include "claip/evaluation.hpp"
#include "claip/metrics.hpp"
#include "claip/trainer.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace claip;
namespace fs = std::filesystem;

namespace {

DatasetSpec small_spec() {
  DatasetSpec s;
  s.clips_per_class = 12;
  s.frames = 4;
  s.audio_samples = 4000;
  s.seed = 3;
  return s;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Softmax regression trained by full-batch gradient descent on standardized features.
double probe_accuracy(const std::vector<std::vector<double>>& x, const std::vector<int>& y, std::size_t classes,
                      const std::vector<std::size_t>& tr, const std::vector<std::size_t>& te) {
  const std::size_t d = x[0].size();
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (auto i : tr)
    for (std::size_t j = 0; j < d; ++j) mu[j] += x[i][j] / double(tr.size());
  for (auto i : tr)
    for (std::size_t j = 0; j < d; ++j) sd[j] += (x[i][j] - mu[j]) * (x[i][j] - mu[j]) / double(tr.size());
  for (auto& s : sd) s = std::sqrt(s) + 1e-6;
  auto z = [&](std::size_t i, std::size_t j) { return (x[i][j] - mu[j]) / sd[j]; };
  std::vector<double> w(classes * (d + 1), 0.0);
  auto scores = [&](std::size_t i) {
    std::vector<double> s(classes);
    for (std::size_t k = 0; k < classes; ++k) {
      double a = w[k * (d + 1) + d];
      for (std::size_t j = 0; j < d; ++j) a += w[k * (d + 1) + j] * z(i, j);
      s[k] = a;
    }
    return s;
  };
  for (int it = 0; it < 200; ++it) {
    std::vector<double> g(w.size(), 0.0);
    for (auto i : tr) {
      auto s = scores(i);
      const double m = *std::max_element(s.begin(), s.end());
      double tot = 0;
      for (auto& v : s) tot += (v = std::exp(v - m));
      for (std::size_t k = 0; k < classes; ++k) {
        const double delta = s[k] / tot - (int(k) == y[i] ? 1.0 : 0.0);
        for (std::size_t j = 0; j < d; ++j) g[k * (d + 1) + j] += delta * z(i, j);
        g[k * (d + 1) + d] += delta;
      }
    }
    for (std::size_t q = 0; q < w.size(); ++q) w[q] -= 0.5 * (g[q] / double(tr.size()) + 1e-3 * w[q]);
  }
  std::size_t hit = 0;
  for (auto i : te) {
    const auto s = scores(i);
    hit += int(std::max_element(s.begin(), s.end()) - s.begin()) == y[i];
  }
  return double(hit) / double(te.size());
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("generated clips respect ranges and shapes") {
    const auto spec = small_spec();
    const auto ds = generate(spec);
    CHECK(ds.clips.size() == spec.total());
    std::set<std::string> ids;
    for (const auto& c : ds.clips) {
      ids.insert(c.id);
      CHECK(c.frames.shape() == Shape{4, 32, 32, 1});
      CHECK(c.waveform.samples.size() == 4000);
      CHECK(c.label >= 0);
      CHECK(c.label < 7);
      for (float v : c.frames.data()) CHECK((v >= 0.0f && v <= 1.0f));
      for (float v : c.waveform.samples) CHECK((v >= -1.0f && v <= 1.0f));
    }
    CHECK(ids.size() == ds.clips.size());
    for (std::size_t k = 0; k < 7; ++k) CHECK(class_tone_hz(spec, k) == 200.0 + 60.0 * double(k));
  }

  TEST_CASE("generation is seeded") {
    auto spec = small_spec();
    CHECK(generate(spec).checksum() == generate(spec).checksum());
    spec.seed = 4;
    CHECK(generate(spec).checksum() != generate(small_spec()).checksum());
  }

  TEST_CASE("noiseless redundant data is separable by nearest centroid") {
    auto spec = small_spec();
    spec.sigma_v = spec.sigma_a = 0.0;
    spec.rho = 1.0;
    const auto ds = generate(spec);
    const std::size_t n = ds.clips[0].frames.size();
    std::vector<std::vector<double>> centroid(7, std::vector<double>(n, 0.0));
    std::vector<double> count(7, 0.0);
    for (const auto& c : ds.clips) {
      for (std::size_t i = 0; i < n; ++i) centroid[c.label][i] += c.frames[i];
      count[c.label] += 1.0;
    }
    for (int k = 0; k < 7; ++k)
      for (auto& v : centroid[k]) v /= count[k];
    std::size_t hit = 0;
    for (const auto& c : ds.clips) {
      int best = 0;
      double best_d = 1e300;
      for (int k = 0; k < 7; ++k) {
        double d = 0;
        for (std::size_t i = 0; i < n; ++i) d += (c.frames[i] - centroid[k][i]) * (c.frames[i] - centroid[k][i]);
        if (d < best_d) best_d = d, best = k;
      }
      hit += best == c.label;
    }
    CHECK(hit == ds.clips.size());
  }

  TEST_CASE("with partial redundancy a joint probe beats either modality alone") {
    DatasetSpec spec = small_spec();
    spec.clips_per_class = 40;
    spec.rho = 0.5;
    spec.sigma_v = spec.sigma_a = 0.2;
    const auto ds = generate(spec);
    audio::AudioConfig ac;
    ac.n_mels = 32;
    audio::AudioFrontend fe(ac);
    std::vector<std::vector<double>> xv, xa, xb;
    std::vector<int> y;
    for (const auto& c : ds.clips) {
      // Time-averaged frame pixels and time-averaged log-mel.
      std::vector<double> v(32 * 32, 0.0);
      for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += c.frames[t * v.size() + i] / 4.0;
      const auto m = fe(c.waveform);
      std::vector<double> a(32, 0.0);
      for (std::size_t t = 0; t < m.n_frames(); ++t)
        for (std::size_t k = 0; k < 32; ++k) a[k] += m.frames.at(t, k) / double(m.n_frames());
      std::vector<double> b = v;
      b.insert(b.end(), a.begin(), a.end());
      xv.push_back(v);
      xa.push_back(a);
      xb.push_back(b);
      y.push_back(c.label);
    }
    const auto folds = make_folds(y, 4, 1);
    const auto tr = complement(folds, 0);
    const auto& te = folds[0];
    const double pv = probe_accuracy(xv, y, 7, tr, te), pa = probe_accuracy(xa, y, 7, tr, te),
                 pb = probe_accuracy(xb, y, 7, tr, te);
    MESSAGE("probe accuracy video ", pv, " audio ", pa, " joint ", pb);
    CHECK(pb > pv);
    CHECK(pb > pa);
  }

  TEST_CASE("temporal mode separates paired classes by onset only") {
    auto spec = small_spec();
    spec.temporal_order = true;
    spec.sigma_v = spec.sigma_a = 0.0;
    spec.rho = 1.0;
    const auto ds = generate(spec);
    const ClipSample* even = nullptr;
    const ClipSample* odd = nullptr;
    for (const auto& c : ds.clips) {
      if (c.label == 0 && !even) even = &c;
      if (c.label == 1 && !odd) odd = &c;
    }
    REQUIRE(even);
    REQUIRE(odd);
    const std::size_t f = 32 * 32;
    // Reversing the frame order of the early class yields the late class.
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t i = 0; i < f; ++i) CHECK(even->frames[t * f + i] == odd->frames[(3 - t) * f + i]);
    CHECK(class_tone_hz(spec, 0) == class_tone_hz(spec, 1));
  }

  TEST_CASE("stratified folds") {
    const auto ds = generate([] {
      auto s = small_spec();
      s.clips_per_class = 50;
      s.audio_samples = 400;
      s.frames = 1;
      return s;
    }());
    const auto labels = ds.labels();
    const auto folds = make_folds(labels, 5, 7);
    REQUIRE(folds.size() == 5);
    std::multiset<std::size_t> all;
    for (const auto& f : folds) {
      std::vector<int> per(7, 0);
      for (auto i : f) {
        all.insert(i);
        ++per[labels[i]];
      }
      for (int k = 0; k < 7; ++k) CHECK(per[k] == 10);
    }
    CHECK(all.size() == labels.size());
    CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == labels.size());
    CHECK(make_folds(labels, 5, 7) == folds);
    CHECK(make_folds(labels, 5, 8) != folds);
  }

  TEST_CASE("imbalanced folds stay within one sample of the global proportion") {
    std::vector<int> labels;
    const std::vector<std::size_t> counts{23, 7, 11, 5};
    for (std::size_t k = 0; k < counts.size(); ++k) labels.insert(labels.end(), counts[k], int(k));
    const auto folds = make_folds(labels, 5, 1);
    for (const auto& f : folds)
      for (std::size_t k = 0; k < counts.size(); ++k) {
        const auto n = double(std::count_if(f.begin(), f.end(), [&](auto i) { return labels[i] == int(k); }));
        CHECK(std::abs(n - double(counts[k]) / 5.0) < 1.0);
      }
    CHECK_THROWS_AS(make_folds(labels, 6, 1), DataError);
  }

  TEST_CASE("hand-counted recalls") {
    ConfusionMatrix cm(2);
    cm.add(std::vector<int>{0, 0, 0, 1}, std::vector<int>{0, 0, 1, 1});
    const auto r = uar_war(cm);
    CHECK(r.uar == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
    CHECK(r.war == 0.75);
    ConfusionMatrix perfect(3);
    perfect.add(std::vector<int>{0, 1, 2, 2}, std::vector<int>{0, 1, 2, 2});
    CHECK(uar_war(perfect).uar == 1.0);
    CHECK(uar_war(perfect).war == 1.0);
  }

  TEST_CASE("recall metrics equal the per-sample oracle on random instances") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 1000; ++trial) {
      const int k = 2 + int(rng() % 10);
      const std::size_t n = 1 + rng() % 200;
      std::vector<int> labels(n), preds(n);
      for (std::size_t i = 0; i < n; ++i) {
        labels[i] = int(rng() % k);
        preds[i] = rng() % 3 == 0 ? labels[i] : int(rng() % k);
      }
      ConfusionMatrix cm(k);
      cm.add(labels, preds);
      const auto got = uar_war(cm, false);
      const auto ref = oracle::recall_from_pairs(labels, preds, k);
      CHECK(got.uar == ref.uar);
      CHECK(got.war == ref.war);
      std::size_t rows = 0;
      for (int c = 0; c < k; ++c) rows += cm.row_sum(c);
      CHECK(rows == n);
    }
  }

  TEST_CASE("absent classes are excluded from the mean recall") {
    ConfusionMatrix cm(3);
    cm.add(std::vector<int>{0, 0, 2}, std::vector<int>{0, 1, 2});
    const auto r = uar_war(cm, false);
    CHECK(r.absent_classes == std::vector<std::size_t>{1});
    CHECK(r.uar == doctest::Approx(0.75).epsilon(1e-15));
  }

  TEST_CASE("relabeling and balance properties") {
    std::mt19937_64 rng(5);
    std::vector<int> labels, preds;
    for (int k = 0; k < 5; ++k)
      for (int i = 0; i < 20; ++i) {
        labels.push_back(k);
        preds.push_back(int(rng() % 5));
      }
    ConfusionMatrix a(5), b(5);
    a.add(labels, preds);
    const std::vector<int> perm{3, 0, 4, 1, 2};
    std::vector<int> pl, pp;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      pl.push_back(perm[labels[i]]);
      pp.push_back(perm[preds[i]]);
    }
    b.add(pl, pp);
    const auto ra = uar_war(a), rb = uar_war(b);
    CHECK(ra.war == rb.war);
    CHECK(ra.uar == doctest::Approx(rb.uar).epsilon(1e-15));
    CHECK(ra.uar == doctest::Approx(ra.war).epsilon(1e-15));
  }

  TEST_CASE("constant predictors") {
    std::vector<int> labels;
    for (int k = 0; k < 7; ++k) labels.insert(labels.end(), 10, k);
    const auto r = evaluate_predictions(0, 7, labels, std::vector<int>(labels.size(), 3));
    CHECK(r.uar == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
    CHECK(r.war == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
    std::vector<int> skewed(90, 0);
    skewed.insert(skewed.end(), 10, 1);
    const auto s = evaluate_predictions(0, 2, skewed, std::vector<int>(100, 0));
    CHECK(s.war == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.uar == doctest::Approx(0.5).epsilon(1e-15));
  }

  TEST_CASE("cross-validation summary is the arithmetic mean") {
    std::vector<FoldReport> folds(5);
    const std::vector<double> war{0.5, 0.6, 0.9, 0.7, 0.8}, uar{0.4, 0.6, 0.8, 0.6, 0.6};
    for (std::size_t i = 0; i < 5; ++i) {
      folds[i].fold = i;
      folds[i].war = war[i];
      folds[i].uar = uar[i];
    }
    const auto cv = summarize(folds);
    CHECK(cv.mean_war == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(cv.mean_uar == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(cv.std_war == doctest::Approx(std::sqrt(0.02)).epsilon(1e-12));
  }

  TEST_CASE("evaluation refuses leaked folds") {
    auto run = fixture::tiny_run(1);
    const auto ds = generate(run.data);
    const auto clips = prepare_all<float>(run.model, ds.clips);
    ClaipModel<float> m(run.model);
    const std::vector<std::size_t> train_idx{0, 1, 2}, eval_idx{2, 3};
    CHECK_THROWS_AS(evaluate<float>(m, clips, eval_idx, 0, train_idx), FoldLeakageError);
    const std::vector<std::size_t> ok{3, 4};
    const auto r = evaluate<float>(m, clips, ok, 0, train_idx);
    CHECK(r.confusion.total() == 2);
    CHECK(r.trainable == m.count_params().trainable);
  }

  TEST_CASE("cross validation over two folds") {
    auto run = fixture::tiny_run(2, 3);
    const auto ds = generate(run.data);
    const auto clips = prepare_all<float>(run.model, ds.clips);
    run.train.epochs = 1;
    const auto folds = make_folds(ds.labels(), 2, 0);
    const auto cv = cross_validate<float>(run.model, run.train, clips, folds);
    REQUIRE(cv.folds.size() == 2);
    CHECK(cv.mean_war == doctest::Approx((cv.folds[0].war + cv.folds[1].war) / 2.0).epsilon(1e-15));
    CrossValidateOptions two;
    two.threads = 2;
    const auto cv2 = cross_validate<float>(run.model, run.train, clips, folds, two);
    CHECK(cv2.mean_war == cv.mean_war);
    const auto dir = fixture::temp_dir("cv_report");
    write_report_csv(cv, dir / "report.csv");
    std::ifstream in(dir / "report.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "fold,uar,war,trainable_M,ratio");
  }

  TEST_CASE("feature export") {
    auto run = fixture::tiny_run(2, 3);
    const auto ds = generate(run.data);
    const auto clips = prepare_all<float>(run.model, ds.clips);
    const auto dir = fixture::temp_dir("export");
    ClaipModel<float> frozen(run.model);
    export_features<float>(frozen, clips, dir / "frozen.csv");
    std::ifstream in(dir / "frozen.csv");
    std::string line;
    std::size_t rows = 0, width = 0;
    while (std::getline(in, line)) {
      if (rows == 0) width = std::size_t(std::count(line.begin(), line.end(), ',')) + 1 - 2;
      ++rows;
    }
    CHECK(rows == clips.size() + 1);
    CHECK(width == run.model.visual.d_model + run.model.audio.d_model);

    ClaipModel<float> trained(run.model);
    run.train.epochs = 2;
    run.train.lr_peak = 1e-2;
    train<float>(trained, clips, iota(clips.size()), {}, run.train);
    export_features<float>(trained, clips, dir / "trained.csv");
    CHECK(file_checksum(dir / "frozen.csv") != file_checksum(dir / "trained.csv"));
  }

  TEST_CASE("dataset and fold files round trip") {
    auto spec = small_spec();
    spec.clips_per_class = 5;
    const auto ds = generate(spec);
    const auto dir = fixture::temp_dir("manifest");
    save_dataset(ds, dir);
    std::ifstream man(dir / "dataset.manifest");
    std::string first;
    std::getline(man, first);
    const auto j = nlohmann::json::parse(first);
    for (const char* k : {"id", "frames_path", "wav_path", "label"}) CHECK(j.contains(k));
    const auto back = load_dataset(dir / "dataset.manifest", 16000);
    REQUIRE(back.clips.size() == ds.clips.size());
    for (std::size_t i = 0; i < ds.clips.size(); ++i) {
      CHECK(back.clips[i].id == ds.clips[i].id);
      CHECK(back.clips[i].label == ds.clips[i].label);
      CHECK(bitwise_equal(back.clips[i].frames, ds.clips[i].frames));
    }
    const auto folds = make_folds(ds.labels(), 5, 2);
    save_folds(folds, ds.clips, dir / "folds.json");
    CHECK(load_folds(dir / "folds.json", ds.clips) == folds);
    std::ofstream bad(dir / "bad.json");
    bad << nlohmann::json{{ds.clips[0].id, ds.clips[1].id}, {ds.clips[1].id}}.dump();
    bad.close();
    CHECK_THROWS_AS(load_folds(dir / "bad.json", ds.clips), FoldLeakageError);
  }
}
