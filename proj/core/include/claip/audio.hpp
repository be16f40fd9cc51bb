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

#include <atomic>
#include <cmath>
#include <complex>
#include <cstddef>
#include <filesystem>
#include <vector>

#include "claip/tensor.hpp"

namespace claip::audio {

// Added to every mel energy before the log; silence maps to log(1e-10).
inline constexpr double kLogOffset = 1e-10;
inline const double kLogFloor = std::log(kLogOffset);

struct Waveform {
  std::vector<float> samples;
  int sample_rate = 16000;

  void validate() const;
};

struct AudioConfig {
  int sample_rate = 16000;
  std::size_t window = 400;
  std::size_t hop = 160;
  // 0 means the DFT size equals the window length.
  std::size_t n_fft = 0;
  std::size_t n_mels = 64;
  double f_min = 50.0;
  double f_max = 8000.0;

  std::size_t fft_size() const { return n_fft == 0 ? window : n_fft; }
  void validate() const;
};

// 1 + floor((len - window) / hop); zero when len < window.
std::size_t frame_count(std::size_t length, std::size_t window, std::size_t hop);

// Periodic Hann window.
std::vector<double> hann_window(std::size_t n);

// One-sided complex spectra, n_frames x (n_fft/2 + 1), frame-major.
struct ComplexFrames {
  std::size_t n_frames = 0;
  std::size_t n_bins = 0;
  std::size_t n_fft = 0;
  int sample_rate = 0;
  std::vector<std::complex<double>> bins;

  const std::complex<double>& at(std::size_t frame, std::size_t bin) const { return bins[frame * n_bins + bin]; }
  double power(std::size_t frame, std::size_t bin) const { return std::norm(at(frame, bin)); }
};

// Hann-windowed short-time DFT without centering. Frames shorter than
// n_fft are zero padded on the right.
ComplexFrames stft(const Waveform& w, std::size_t window, std::size_t hop, std::size_t n_fft = 0);

// Slaney mel scale: linear below 1 kHz, logarithmic above.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular filters, equally spaced on the mel scale between f_min and
// f_max, with Slaney area normalization (2 / bandwidth).
class MelFilterbank {
 public:
  MelFilterbank(std::size_t n_mels, std::size_t n_fft, int sample_rate, double f_min, double f_max);

  std::size_t n_mels() const noexcept { return n_mels_; }
  std::size_t n_bins() const noexcept { return n_bins_; }
  const std::vector<double>& centers_hz() const noexcept { return centers_; }
  double weight(std::size_t mel, std::size_t bin) const { return weights_[mel * n_bins_ + bin]; }

  // power: n_bins values -> n_mels energies.
  void apply(const double* power, double* energies) const;

 private:
  std::size_t n_mels_;
  std::size_t n_bins_;
  std::vector<double> centers_;
  std::vector<double> weights_;
};

struct MelSpectrogram {
  Tensor<float> frames;  // [T_a x F_a], log(energy + 1e-10)
  std::size_t hop = 0;
  std::size_t window = 0;
  std::size_t n_mels = 0;

  std::size_t n_frames() const { return frames.rank() == 2 ? frames.dim(0) : 0; }
};

MelSpectrogram mel_project(const ComplexFrames& spec, const MelFilterbank& bank, std::size_t window, std::size_t hop);
MelSpectrogram mel_project(const ComplexFrames& spec, std::size_t n_mels, double f_min, double f_max,
                           std::size_t window, std::size_t hop);

// Waveform -> log-mel under one configuration. Counts invocations so callers
// can verify an unused modality never touches the frontend.
class AudioFrontend {
 public:
  explicit AudioFrontend(AudioConfig config);
  AudioFrontend(const AudioFrontend& other);

  MelSpectrogram operator()(const Waveform& w) const;

  const AudioConfig& config() const noexcept { return config_; }
  const MelFilterbank& filterbank() const noexcept { return bank_; }
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  AudioConfig config_;
  MelFilterbank bank_;
  mutable std::atomic<std::size_t> calls_{0};
};

// Mono 16-bit PCM RIFF/WAVE.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& w);
// Headerless little-endian f32 samples.
Waveform read_raw_f32(const std::filesystem::path& path, int sample_rate);
void write_raw_f32(const std::filesystem::path& path, const Waveform& w);

// Chooses the reader by extension (.wav or .f32) and rejects a sample rate
// different from the configured one.
Waveform load_waveform(const std::filesystem::path& path, int expected_rate);
void save_waveform(const std::filesystem::path& path, const Waveform& w);

}  // namespace claip::audio
