// Copyright 2026 The insectleaf Authors. All Rights Reserved.
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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "insectleaf/error.hpp"
#include "insectleaf/feature_map.hpp"
#include "insectleaf/fft.hpp"

namespace insectleaf {

inline double hz_to_mel(double hz) {
  if (!(hz >= 0.0)) throw std::invalid_argument("hz_to_mel: frequency must be non-negative");
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct MelConfig {
  std::size_t n_filters = 64;
  std::size_t hop = 147;
  std::size_t window = 294;
  std::size_t fft_size = 1024;
  double f_min = 0.0;
  double f_max = 22050.0;
  std::uint32_t sample_rate = 44100;
  double log_floor = 1e-6;
  std::size_t chunk_samples = 220500;

  std::size_t frames() const { return chunk_samples / hop; }

  void validate() const {
    if (n_filters < 2) throw ConfigError("mel: need at least two filters");
    if (hop == 0 || window != 2 * hop) throw ConfigError("mel: window must be twice the hop");
    if (fft_size < window) throw ConfigError("mel: FFT size must cover the window");
    if (!(f_min >= 0.0) || !(f_max > f_min) || std::abs(f_max - sample_rate / 2.0) > 1e-9)
      throw ConfigError("mel: frequency range must be [f_min, sample_rate / 2]");
    if (!(log_floor > 0.0)) throw ConfigError("mel: log floor must be positive");
    if (chunk_samples <= window) throw ConfigError("mel: chunk shorter than one window");
  }
};

/// The n_filters + 2 mel-spaced triangle breakpoints, in Hz.
inline std::vector<double> mel_breakpoints(std::size_t n_filters, double f_min, double f_max) {
  const double lo = hz_to_mel(f_min), hi = hz_to_mel(f_max);
  std::vector<double> hz(n_filters + 2);
  for (std::size_t i = 0; i < hz.size(); ++i)
    hz[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_filters + 1));
  hz.front() = f_min;
  hz.back() = f_max;
  return hz;
}

/// Peak frequency of each triangle (breakpoints 1..n).
inline std::vector<double> mel_center_frequencies(const MelConfig& c) {
  auto bp = mel_breakpoints(c.n_filters, c.f_min, c.f_max);
  return {bp.begin() + 1, bp.end() - 1};
}

/// Triangular filters with unit peak evaluated on the FFT bin grid.
/// Stored sparsely: each row keeps its first non-zero bin and weights.
class MelFilterbank {
 public:
  explicit MelFilterbank(const MelConfig& c) : n_bins_(c.fft_size / 2 + 1) {
    c.validate();
    const auto bp = mel_breakpoints(c.n_filters, c.f_min, c.f_max);
    const double bin_hz = static_cast<double>(c.sample_rate) / c.fft_size;
    rows_.resize(c.n_filters);
    for (std::size_t n = 0; n < c.n_filters; ++n) {
      const double lo = bp[n], mid = bp[n + 1], hi = bp[n + 2];
      Row& row = rows_[n];
      row.center_hz = mid;
      std::vector<double> w(n_bins_, 0.0);
      for (std::size_t k = 0; k < n_bins_; ++k) {
        const double f = k * bin_hz;
        if (f > lo && f < hi) w[k] = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      }
      auto first = std::find_if(w.begin(), w.end(), [](double v) { return v > 0.0; });
      if (first == w.end())
        throw ConfigError("mel filter " + std::to_string(n) + " covers no FFT bin; increase fft_size");
      auto last = std::find_if(w.rbegin(), w.rend(), [](double v) { return v > 0.0; }).base();
      row.first_bin = static_cast<std::size_t>(first - w.begin());
      row.weights.assign(first, last);
    }
  }

  std::size_t filters() const { return rows_.size(); }
  std::size_t bins() const { return n_bins_; }
  double center_hz(std::size_t n) const { return rows_[n].center_hz; }

  double weight(std::size_t n, std::size_t bin) const {
    const Row& r = rows_[n];
    if (bin < r.first_bin || bin >= r.first_bin + r.weights.size()) return 0.0;
    return r.weights[bin - r.first_bin];
  }

  /// Dense n_filters x (fft_size/2 + 1) matrix, row-major.
  std::vector<double> dense() const {
    std::vector<double> m(rows_.size() * n_bins_, 0.0);
    for (std::size_t n = 0; n < rows_.size(); ++n)
      for (std::size_t j = 0; j < rows_[n].weights.size(); ++j) m[n * n_bins_ + rows_[n].first_bin + j] = rows_[n].weights[j];
    return m;
  }

  double apply(std::size_t n, std::span<const double> power) const {
    const Row& r = rows_[n];
    double acc = 0.0;
    for (std::size_t j = 0; j < r.weights.size(); ++j) acc += r.weights[j] * power[r.first_bin + j];
    return acc;
  }

 private:
  struct Row {
    std::size_t first_bin = 0;
    std::vector<double> weights;
    double center_hz = 0.0;
  };
  std::size_t n_bins_;
  std::vector<Row> rows_;
};

/// Fixed log-mel frontend: centred power STFT (periodic Hann, reflect
/// padding), mel projection, natural log with a small floor. The frame that a
/// centred STFT adds past the last hop is dropped so that a chunk of
/// chunk_samples yields exactly chunk_samples / hop frames.
class MelFrontend {
 public:
  explicit MelFrontend(MelConfig config = {}) : config_(config), bank_(config_) {
    window_.resize(config_.window);
    for (std::size_t i = 0; i < config_.window; ++i)
      window_[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(config_.window));
  }

  const MelConfig& config() const noexcept { return config_; }
  const MelFilterbank& filterbank() const noexcept { return bank_; }

  /// Mel-band power before log compression.
  FeatureMapT<double> power(std::span<const float> chunk) const {
    if (chunk.size() != config_.chunk_samples)
      throw DataError("mel frontend expects " + std::to_string(config_.chunk_samples) + " samples, got " +
                      std::to_string(chunk.size()));
    const std::size_t n = chunk.size(), half = config_.window / 2, frames = config_.frames();
    FeatureMapT<double> out(config_.n_filters, frames);
    fill_axes(out);
    RealFft<double> fft(config_.fft_size);
    std::vector<double> spec(fft.bins());
    const auto reflect = [n](std::ptrdiff_t i) {
      if (i < 0) i = -i;
      const auto last = static_cast<std::ptrdiff_t>(n) - 1;
      if (i > last) i = 2 * last - i;
      return static_cast<std::size_t>(i);
    };
    for (std::size_t f = 0; f < frames; ++f) {
      auto buf = fft.signal();
      std::fill(buf.begin(), buf.end(), 0.0);
      const auto start = static_cast<std::ptrdiff_t>(f * config_.hop) - static_cast<std::ptrdiff_t>(half);
      for (std::size_t i = 0; i < config_.window; ++i) buf[i] = window_[i] * chunk[reflect(start + static_cast<std::ptrdiff_t>(i))];
      fft.forward();
      for (std::size_t k = 0; k < spec.size(); ++k) spec[k] = std::norm(fft.spectrum()[k]);
      for (std::size_t b = 0; b < config_.n_filters; ++b) out.at(b, f) = bank_.apply(b, spec);
    }
    return out;
  }

  FeatureMap features(std::span<const float> chunk) const {
    const auto p = power(chunk);
    FeatureMap out(p.bands, p.frames);
    out.band_hz = p.band_hz;
    out.frame_seconds = p.frame_seconds;
    for (std::size_t i = 0; i < p.values.size(); ++i) out.values[i] = static_cast<float>(std::log(p.values[i] + config_.log_floor));
    return out;
  }

 private:
  template <typename T>
  void fill_axes(FeatureMapT<T>& fm) const {
    fm.band_hz.resize(config_.n_filters);
    for (std::size_t b = 0; b < config_.n_filters; ++b) fm.band_hz[b] = bank_.center_hz(b);
    fm.frame_seconds = static_cast<double>(config_.hop) / config_.sample_rate;
  }

  MelConfig config_;
  MelFilterbank bank_;
  std::vector<double> window_;
};

}  // namespace insectleaf
