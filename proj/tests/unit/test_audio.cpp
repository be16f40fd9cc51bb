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
#include <numbers>
#include <random>

#include <doctest.h>

#include "claip/audio.hpp"
#include "claip/error.hpp"
#include "oracles.hpp"

using namespace claip;
using namespace claip::audio;
namespace fs = std::filesystem;

namespace {

Waveform tone(double hz, std::size_t n, double amp = 0.5, int rate = 16000) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = float(amp * std::sin(2.0 * std::numbers::pi * hz * double(i) / rate));
  return w;
}

// Slaney mel scale written out independently of the library.
double slaney_mel(double hz) {
  const double f_sp = 200.0 / 3.0, min_log_hz = 1000.0, min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return hz < min_log_hz ? hz / f_sp : min_log_mel + std::log(hz / min_log_hz) / logstep;
}

double slaney_hz(double mel) {
  const double f_sp = 200.0 / 3.0, min_log_hz = 1000.0, min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return mel < min_log_mel ? mel * f_sp : min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("claip_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("audio") {
  TEST_CASE("frame count formula") {
    CHECK(frame_count(16000, 400, 160) == 98);
    CHECK(frame_count(400, 400, 160) == 1);
    CHECK(frame_count(399, 400, 160) == 0);
    for (std::size_t len = 400; len < 2000; len += 37)
      CHECK(stft(tone(300, len), 400, 160).n_frames == 1 + (len - 400) / 160);
  }

  TEST_CASE("waveform shorter than a window asks for padding") {
    try {
      stft(tone(300, 100), 400, 160);
      FAIL("expected AudioError");
    } catch (const AudioError& e) {
      CHECK(std::string(e.what()).find("pad") != std::string::npos);
    }
  }

  TEST_CASE("DC input concentrates energy at bin 0") {
    Waveform w;
    w.samples.assign(1600, 0.5f);
    const auto s = stft(w, 400, 160);
    for (std::size_t f = 0; f < s.n_frames; ++f) {
      std::size_t best = 0;
      double total = 0.0;
      for (std::size_t b = 0; b < s.n_bins; ++b) {
        total += s.power(f, b);
        if (s.power(f, b) > s.power(f, best)) best = b;
      }
      CHECK(best == 0);
      // The Hann main lobe spills only into the first neighbour.
      CHECK((s.power(f, 0) + s.power(f, 1)) / total > 1.0 - 1e-12);
    }
  }

  TEST_CASE("sine peak sits at the analytic bin and matches a direct DFT") {
    const auto w = tone(440, 4000);
    for (std::size_t n_fft : {std::size_t(400), std::size_t(512)}) {
      const auto s = stft(w, 400, 160, n_fft);
      const std::size_t expect = std::size_t(std::lround(440.0 * double(n_fft) / 16000.0));
      std::size_t best = 0;
      for (std::size_t b = 0; b < s.n_bins; ++b)
        if (s.power(2, b) > s.power(2, best)) best = b;
      CHECK(best == expect);

      const auto hann = oracle::periodic_hann(400);
      std::vector<double> frame(n_fft, 0.0);
      for (std::size_t i = 0; i < 400; ++i) frame[i] = w.samples[2 * 160 + i] * hann[i];
      const auto ref = oracle::direct_dft(frame);
      for (std::size_t b = 0; b < s.n_bins; ++b) CHECK(std::abs(s.at(2, b) - ref[b]) < 1e-9 * double(n_fft));
    }
  }

  TEST_CASE("silence floors every cell") {
    Waveform w;
    w.samples.assign(16000, 0.0f);
    AudioFrontend fe(AudioConfig{});
    const auto m = fe(w);
    CHECK(m.n_frames() == 98);
    CHECK(m.frames.dim(1) == 64);
    for (float v : m.frames.data()) CHECK(v == doctest::Approx(std::log(1e-10)).epsilon(1e-6));
    CHECK(kLogFloor == doctest::Approx(-23.0258509).epsilon(1e-8));
  }

  TEST_CASE("filterbank centers follow the Slaney scale") {
    MelFilterbank bank(64, 400, 16000, 50.0, 8000.0);
    const double lo = slaney_mel(50.0), hi = slaney_mel(8000.0);
    for (std::size_t m = 0; m < 64; ++m) {
      const double expect = slaney_hz(lo + (hi - lo) * double(m + 1) / 65.0);
      CHECK(bank.centers_hz()[m] == doctest::Approx(expect).epsilon(1e-9));
    }
    CHECK_THROWS_AS(MelFilterbank(300, 400, 16000, 50.0, 8000.0), AudioError);
  }

  TEST_CASE("440 Hz localizes to the nearest mel filter") {
    AudioConfig cfg;
    AudioFrontend fe(cfg);
    const auto w = tone(440, 16000);
    const auto m = fe(w);
    const auto& centers = fe.filterbank().centers_hz();
    const std::size_t nearest = std::size_t(
        std::min_element(centers.begin(), centers.end(),
                         [](double a, double b) { return std::abs(a - 440) < std::abs(b - 440); }) -
        centers.begin());
    // Brute-force filter application on a directly computed spectrum.
    const auto hann = oracle::periodic_hann(400);
    std::vector<double> frame(400);
    for (std::size_t i = 0; i < 400; ++i) frame[i] = w.samples[10 * 160 + i] * hann[i];
    const auto ref = oracle::direct_dft(frame);
    std::vector<double> energy(64, 0.0);
    for (std::size_t k = 0; k < 64; ++k)
      for (std::size_t b = 0; b < ref.size(); ++b) energy[k] += fe.filterbank().weight(k, b) * std::norm(ref[b]);
    const std::size_t brute = std::size_t(std::max_element(energy.begin(), energy.end()) - energy.begin());
    CHECK(brute == nearest);
    for (std::size_t t = 0; t < m.n_frames(); ++t) {
      std::size_t best = 0;
      for (std::size_t k = 0; k < 64; ++k)
        if (m.frames.at(t, k) > m.frames.at(t, best)) best = k;
      CHECK(best == nearest);
    }
    for (std::size_t k = 0; k < 64; ++k)
      CHECK(std::abs(m.frames.at(10, k) - std::log(energy[k] + 1e-10)) < 1e-4);
  }

  TEST_CASE("doubling the amplitude adds log 4") {
    AudioFrontend fe(AudioConfig{});
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 0.1);
    Waveform w = tone(700, 8000, 0.3);
    for (auto& s : w.samples) s += float(n(rng));
    Waveform w2 = w;
    for (auto& s : w2.samples) s *= 2.0f;
    const auto a = fe(w), b = fe(w2);
    std::size_t checked = 0;
    for (std::size_t i = 0; i < a.frames.size(); ++i) {
      if (a.frames[i] < kLogFloor + 10.0) continue;
      CHECK(std::abs((b.frames[i] - a.frames[i]) - std::log(4.0)) < 1e-3);
      ++checked;
    }
    CHECK(checked > a.frames.size() / 2);
  }

  TEST_CASE("shifting by one hop shifts frames by one") {
    AudioFrontend fe(AudioConfig{});
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<float> u(-0.5f, 0.5f);
    Waveform x;
    x.samples.resize(8160);
    for (auto& s : x.samples) s = u(rng);
    Waveform head, tail;
    head.samples.assign(x.samples.begin(), x.samples.begin() + 8000);
    tail.samples.assign(x.samples.begin() + 160, x.samples.end());
    const auto a = fe(head), b = fe(tail);
    REQUIRE(a.n_frames() == b.n_frames());
    for (std::size_t t = 0; t + 1 < a.n_frames(); ++t)
      for (std::size_t k = 0; k < 64; ++k) CHECK(std::abs(a.frames.at(t + 1, k) - b.frames.at(t, k)) <= 1e-5);
  }

  TEST_CASE("finite input never yields NaN or Inf and stays above the floor") {
    AudioFrontend fe(AudioConfig{});
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    for (int trial = 0; trial < 5; ++trial) {
      Waveform w;
      w.samples.resize(4000 + 999 * trial);
      for (auto& s : w.samples) s = trial == 4 ? 1e-30f : u(rng);
      const auto m = fe(w);
      CHECK(m.n_frames() == frame_count(w.samples.size(), 400, 160));
      for (float v : m.frames.data()) {
        CHECK(std::isfinite(v));
        CHECK(v >= float(kLogFloor) - 1e-4f);
      }
    }
  }

  TEST_CASE("frontend counts its invocations") {
    AudioFrontend fe(AudioConfig{});
    CHECK(fe.calls() == 0);
    fe(tone(300, 1000));
    fe(tone(300, 1000));
    CHECK(fe.calls() == 2);
  }

  TEST_CASE("config validation") {
    AudioConfig c;
    c.n_mels = 500;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = AudioConfig{};
    c.f_max = 9000;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("wav and raw f32 round trips") {
    const auto dir = temp_dir("audio_io");
    Waveform w = tone(523, 1234, 0.8);
    save_waveform(dir / "a.wav", w);
    save_waveform(dir / "a.f32", w);
    const auto wav = load_waveform(dir / "a.wav", 16000);
    const auto raw = load_waveform(dir / "a.f32", 16000);
    REQUIRE(wav.samples.size() == w.samples.size());
    REQUIRE(raw.samples.size() == w.samples.size());
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
      CHECK(std::abs(wav.samples[i] - w.samples[i]) <= 1.0f / 32767.0f);
      CHECK(raw.samples[i] == w.samples[i]);
    }
    CHECK_THROWS_AS(load_waveform(dir / "a.wav", 8000), AudioError);
    CHECK_THROWS(load_waveform(dir / "missing.wav", 16000));
    CHECK_THROWS(load_waveform(dir / "a.mp3", 16000));
  }
}
