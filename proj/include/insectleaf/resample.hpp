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

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "insectleaf/error.hpp"
#include "insectleaf/log.hpp"

namespace insectleaf {

/// Kaiser-windowed sinc resampler for rational rate ratios.
///
/// The stopband starts at the lower of the two Nyquist frequencies and the
/// window is designed for 100 dB attenuation; the transition band occupies
/// the top 5% of the retained band.
class Resampler {
 public:
  static constexpr double kStopbandDb = 100.0;
  static constexpr double kTransitionFraction = 0.05;

  Resampler(std::uint32_t source_hz, std::uint32_t target_hz) : source_hz_(source_hz), target_hz_(target_hz) {
    if (source_hz == 0 || target_hz == 0) throw DataError("resample: sample rates must be positive");
    const auto g = std::gcd(source_hz, target_hz);
    up_ = target_hz / g;
    down_ = source_hz / g;
    const double band = std::min(1.0, static_cast<double>(target_hz) / source_hz);  // fraction of input Nyquist kept
    const double transition = kTransitionFraction * band;                         // cycles per input sample
    cutoff_ = 0.5 * band - 0.5 * transition;
    beta_ = 0.1102 * (kStopbandDb - 8.7);
    const double taps = (kStopbandDb - 7.95) / (14.36 * transition);
    half_width_ = static_cast<int>(std::ceil(taps / 2.0));
    if (up_ <= kMaxTablePhases) build_table();
  }

  std::uint32_t source_rate() const noexcept { return source_hz_; }
  std::uint32_t target_rate() const noexcept { return target_hz_; }

  std::size_t output_length(std::size_t input_length) const {
    return static_cast<std::size_t>((static_cast<std::uint64_t>(input_length) * up_ + down_ / 2) / down_);
  }

  std::vector<float> process(std::span<const float> input) const {
    if (source_hz_ == target_hz_) return {input.begin(), input.end()};
    const std::size_t out_len = output_length(input.size());
    std::vector<float> out(out_len);
    const auto n_in = static_cast<std::int64_t>(input.size());
    for (std::size_t n = 0; n < out_len; ++n) {
      // Output n sits at input position n * down / up = base + phase / up.
      const std::uint64_t num = static_cast<std::uint64_t>(n) * down_;
      const auto base = static_cast<std::int64_t>(num / up_);
      const auto phase = static_cast<std::uint32_t>(num % up_);
      double acc = 0.0;
      for (int k = -half_width_ + 1; k <= half_width_; ++k) {
        const std::int64_t j = base + k;
        if (j < 0 || j >= n_in) continue;
        acc += input[static_cast<std::size_t>(j)] * tap(phase, k);
      }
      out[n] = static_cast<float>(acc);
    }
    return out;
  }

 private:
  static constexpr std::uint32_t kMaxTablePhases = 4096;

  // Kernel value at offset (k - phase/up) input samples, i.e. h(pos - j).
  double kernel(double tau) const {
    const double x = 2.0 * cutoff_ * tau;
    const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
    const double r = tau / (half_width_ + 1.0);
    if (std::abs(r) >= 1.0) return 0.0;
    const double window = std::cyl_bessel_i(0.0, beta_ * std::sqrt(1.0 - r * r)) / std::cyl_bessel_i(0.0, beta_);
    return 2.0 * cutoff_ * sinc * window;
  }

  double tap(std::uint32_t phase, int k) const {
    if (!table_.empty()) return table_[static_cast<std::size_t>(phase) * width() + static_cast<std::size_t>(k + half_width_ - 1)];
    return kernel(static_cast<double>(phase) / up_ - k);
  }

  std::size_t width() const { return static_cast<std::size_t>(2 * half_width_); }

  void build_table() {
    table_.resize(static_cast<std::size_t>(up_) * width());
    for (std::uint32_t p = 0; p < up_; ++p)
      for (int k = -half_width_ + 1; k <= half_width_; ++k)
        table_[p * width() + static_cast<std::size_t>(k + half_width_ - 1)] = kernel(static_cast<double>(p) / up_ - k);
  }

  std::uint32_t source_hz_;
  std::uint32_t target_hz_;
  std::uint32_t up_ = 1;
  std::uint32_t down_ = 1;
  double cutoff_ = 0.5;
  double beta_ = 0.0;
  int half_width_ = 1;
  std::vector<double> table_;
};

inline std::vector<float> resample(std::span<const float> input, std::uint32_t source_hz, std::uint32_t target_hz) {
  if (target_hz == 0) throw DataError("resample: target rate must be positive");
  if (target_hz > source_hz)
    warn("upsampling from " + std::to_string(source_hz) + " Hz to " + std::to_string(target_hz) +
         " Hz; no content above the source Nyquist frequency is created");
  return Resampler(source_hz, target_hz).process(input);
}

}  // namespace insectleaf
