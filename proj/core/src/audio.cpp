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

#include "claip/audio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include <fmt/format.h>
#include <unsupported/Eigen/FFT>

#include "claip/error.hpp"

namespace claip::audio {

static_assert(std::endian::native == std::endian::little, "WAV and raw f32 I/O assume a little-endian host");

void Waveform::validate() const {
  if (sample_rate <= 0) throw AudioError(fmt::format("sample rate must be positive, got {}", sample_rate));
  if (samples.empty()) throw AudioError("waveform is empty");
}

void AudioConfig::validate() const {
  if (sample_rate <= 0) throw ConfigError("audio.sample_rate must be positive");
  if (window == 0 || hop == 0) throw ConfigError("audio.window and audio.hop must be positive");
  if (fft_size() < window) throw ConfigError("audio.n_fft must be at least audio.window");
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0)) {
    throw ConfigError(fmt::format("audio band [{}, {}] Hz invalid for sample rate {}", f_min, f_max, sample_rate));
  }
  if (n_mels == 0 || n_mels > fft_size() / 2 + 1) {
    throw ConfigError(fmt::format("audio.n_mels = {} exceeds the {} FFT bins", n_mels, fft_size() / 2 + 1));
  }
}

std::size_t frame_count(std::size_t length, std::size_t window, std::size_t hop) {
  if (length < window) return 0;
  return 1 + (length - window) / hop;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

ComplexFrames stft(const Waveform& w, std::size_t window, std::size_t hop, std::size_t n_fft) {
  w.validate();
  if (window == 0 || hop == 0) throw AudioError("stft window and hop must be positive");
  if (n_fft == 0) n_fft = window;
  if (n_fft < window) throw AudioError(fmt::format("n_fft {} shorter than window {}", n_fft, window));
  if (w.samples.size() < window) {
    throw AudioError(fmt::format("waveform has {} samples, fewer than one {}-sample window; pad the clip first",
                                 w.samples.size(), window));
  }
  ComplexFrames out;
  out.n_frames = frame_count(w.samples.size(), window, hop);
  out.n_bins = n_fft / 2 + 1;
  out.n_fft = n_fft;
  out.sample_rate = w.sample_rate;
  out.bins.resize(out.n_frames * out.n_bins);

  const std::vector<double> hann = hann_window(window);
  Eigen::FFT<double> fft;
  std::vector<double> frame(n_fft, 0.0);
  std::vector<std::complex<double>> spectrum;
  for (std::size_t t = 0; t < out.n_frames; ++t) {
    const float* src = w.samples.data() + t * hop;
    for (std::size_t i = 0; i < window; ++i) frame[i] = static_cast<double>(src[i]) * hann[i];
    fft.fwd(spectrum, frame);
    std::copy_n(spectrum.begin(), out.n_bins, out.bins.begin() + static_cast<std::ptrdiff_t>(t * out.n_bins));
  }
  return out;
}

namespace {
constexpr double kMelLinearSlope = 200.0 / 3.0;  // Hz per mel below the break
constexpr double kMelBreakHz = 1000.0;
constexpr double kMelBreak = kMelBreakHz / kMelLinearSlope;
const double kMelLogStep = std::log(6.4) / 27.0;
}  // namespace

double hz_to_mel(double hz) {
  if (hz < kMelBreakHz) return hz / kMelLinearSlope;
  return kMelBreak + std::log(hz / kMelBreakHz) / kMelLogStep;
}

double mel_to_hz(double mel) {
  if (mel < kMelBreak) return mel * kMelLinearSlope;
  return kMelBreakHz * std::exp(kMelLogStep * (mel - kMelBreak));
}

MelFilterbank::MelFilterbank(std::size_t n_mels, std::size_t n_fft, int sample_rate, double f_min, double f_max)
    : n_mels_(n_mels), n_bins_(n_fft / 2 + 1) {
  if (n_mels == 0 || n_mels > n_bins_) {
    throw AudioError(fmt::format("{} mel filters requested but the DFT has only {} bins", n_mels, n_bins_));
  }
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0)) {
    throw AudioError(fmt::format("mel band [{}, {}] Hz invalid for sample rate {}", f_min, f_max, sample_rate));
  }
  const double lo = hz_to_mel(f_min), hi = hz_to_mel(f_max);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  centers_.assign(edges.begin() + 1, edges.end() - 1);
  weights_.assign(n_mels * n_bins_, 0.0);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    const double norm = 2.0 / (right - left);
    for (std::size_t k = 0; k < n_bins_; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
      const double rise = (f - left) / (center - left);
      const double fall = (right - f) / (right - center);
      weights_[m * n_bins_ + k] = std::max(0.0, std::min(rise, fall)) * norm;
    }
  }
}

void MelFilterbank::apply(const double* power, double* energies) const {
  for (std::size_t m = 0; m < n_mels_; ++m) {
    const double* wrow = weights_.data() + m * n_bins_;
    double e = 0.0;
    for (std::size_t k = 0; k < n_bins_; ++k) e += wrow[k] * power[k];
    energies[m] = e;
  }
}

MelSpectrogram mel_project(const ComplexFrames& spec, const MelFilterbank& bank, std::size_t window,
                           std::size_t hop) {
  if (bank.n_bins() != spec.n_bins) {
    throw AudioError(fmt::format("filterbank expects {} bins, spectrum has {}", bank.n_bins(), spec.n_bins));
  }
  MelSpectrogram out;
  out.hop = hop;
  out.window = window;
  out.n_mels = bank.n_mels();
  out.frames = Tensor<float>(Shape{spec.n_frames, bank.n_mels()});
  std::vector<double> power(spec.n_bins), energies(bank.n_mels());
  for (std::size_t t = 0; t < spec.n_frames; ++t) {
    for (std::size_t k = 0; k < spec.n_bins; ++k) power[k] = spec.power(t, k);
    bank.apply(power.data(), energies.data());
    for (std::size_t m = 0; m < bank.n_mels(); ++m) {
      const double v = std::max(std::log(energies[m] + kLogOffset), kLogFloor);
      out.frames.at(t, m) = static_cast<float>(v);
    }
  }
  return out;
}

MelSpectrogram mel_project(const ComplexFrames& spec, std::size_t n_mels, double f_min, double f_max,
                           std::size_t window, std::size_t hop) {
  const MelFilterbank bank(n_mels, spec.n_fft, spec.sample_rate, f_min, f_max);
  return mel_project(spec, bank, window, hop);
}

AudioFrontend::AudioFrontend(AudioConfig config)
    : config_((config.validate(), config)),
      bank_(config_.n_mels, config_.fft_size(), config_.sample_rate, config_.f_min, config_.f_max) {}

AudioFrontend::AudioFrontend(const AudioFrontend& other) : config_(other.config_), bank_(other.bank_) {}

MelSpectrogram AudioFrontend::operator()(const Waveform& w) const {
  ++calls_;
  if (w.sample_rate != config_.sample_rate) {
    throw AudioError(fmt::format("waveform sampled at {} Hz but frontend expects {} Hz (no resampling)",
                                 w.sample_rate, config_.sample_rate));
  }
  const ComplexFrames spec = stft(w, config_.window, config_.hop, config_.fft_size());
  return mel_project(spec, bank_, config_.window, config_.hop);
}

namespace {

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

template <typename U>
U read_le(const std::vector<char>& buf, std::size_t pos) {
  U v;
  std::memcpy(&v, buf.data() + pos, sizeof(U));
  return v;
}

template <typename U>
void write_le(std::ofstream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  const std::vector<char> buf = slurp(path);
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw AudioError(fmt::format("'{}' is not a RIFF/WAVE file", path.string()));
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  Waveform w;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.data() + pos, 4);
    const auto size = read_le<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > buf.size()) throw AudioError(fmt::format("'{}': chunk '{}' truncated", path.string(), id));
    if (id == "fmt ") {
      if (size < 16) throw AudioError("fmt chunk too short");
      const auto format = read_le<std::uint16_t>(buf, body);
      const auto channels = read_le<std::uint16_t>(buf, body + 2);
      w.sample_rate = static_cast<int>(read_le<std::uint32_t>(buf, body + 4));
      const auto bits = read_le<std::uint16_t>(buf, body + 14);
      if (format != 1 || channels != 1 || bits != 16) {
        throw AudioError(fmt::format("'{}': need mono 16-bit PCM, got format {} with {} channels at {} bits",
                                     path.string(), format, channels, bits));
      }
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw AudioError("data chunk precedes fmt chunk");
      const std::size_t n = size / 2;
      w.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        w.samples[i] = static_cast<float>(read_le<std::int16_t>(buf, body + 2 * i)) / 32768.0f;
      }
      w.validate();
      return w;
    }
    pos = body + size + (size & 1u);
  }
  throw AudioError(fmt::format("'{}' has no data chunk", path.string()));
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  w.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  write_le<std::uint16_t>(out, 2);
  write_le<std::uint16_t>(out, 16);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
  for (float s : w.samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    write_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(std::clamp(c * 32768.0f, -32768.0f, 32767.0f))));
  }
  if (!out) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

Waveform read_raw_f32(const std::filesystem::path& path, int sample_rate) {
  const std::vector<char> buf = slurp(path);
  if (buf.size() % 4 != 0) throw AudioError(fmt::format("'{}' size is not a multiple of 4 bytes", path.string()));
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(buf.size() / 4);
  std::memcpy(w.samples.data(), buf.data(), buf.size());
  w.validate();
  return w;
}

void write_raw_f32(const std::filesystem::path& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out.write(reinterpret_cast<const char*>(w.samples.data()), static_cast<std::streamsize>(w.samples.size() * 4));
  if (!out) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

Waveform load_waveform(const std::filesystem::path& path, int expected_rate) {
  const std::string ext = path.extension().string();
  Waveform w;
  if (ext == ".wav") {
    w = read_wav(path);
  } else if (ext == ".f32") {
    w = read_raw_f32(path, expected_rate);
  } else {
    throw AudioError(fmt::format("'{}': unsupported audio extension (use .wav or .f32)", path.string()));
  }
  if (w.sample_rate != expected_rate) {
    throw AudioError(fmt::format("'{}' is sampled at {} Hz, expected {} Hz", path.string(), w.sample_rate,
                                 expected_rate));
  }
  return w;
}

void save_waveform(const std::filesystem::path& path, const Waveform& w) {
  const std::string ext = path.extension().string();
  if (ext == ".wav") {
    write_wav(path, w);
  } else if (ext == ".f32") {
    write_raw_f32(path, w);
  } else {
    throw AudioError(fmt::format("'{}': unsupported audio extension (use .wav or .f32)", path.string()));
  }
}

}  // namespace claip::audio
