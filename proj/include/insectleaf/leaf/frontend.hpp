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
#include <complex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "insectleaf/error.hpp"
#include "insectleaf/feature_map.hpp"
#include "insectleaf/fft.hpp"
#include "insectleaf/leaf/params.hpp"
#include "insectleaf/leaf/pcen.hpp"

namespace insectleaf::leaf {

struct LeafConfig {
  std::size_t chunk_samples = 220500;
  std::uint32_t sample_rate = 44100;
  /// FFT size of the overlap-save blocks used by the filterbank convolution.
  std::size_t block = 2048;
};

/// Geometry of the strided Gaussian pooling ("same" padding: ceil(n / stride)
/// frames, padding split with the smaller half in front).
struct PoolGeometry {
  std::size_t frames = 0;
  std::ptrdiff_t pad_left = 0;

  static PoolGeometry make(std::size_t n, std::size_t kernel, std::size_t stride) {
    PoolGeometry g;
    g.frames = (n + stride - 1) / stride;
    const auto total = std::max<std::ptrdiff_t>(
        static_cast<std::ptrdiff_t>((g.frames - 1) * stride + kernel) - static_cast<std::ptrdiff_t>(n), 0);
    g.pad_left = total / 2;
    return g;
  }
};

/// Learnable frontend: complex Gabor filterbank -> squared modulus ->
/// per-channel Gaussian lowpass pooling -> PCEN.
///
/// The filterbank convolution is "same"-padded cross-correlation,
///   y[p] = sum_j k[j] x[p + j - L/2],
/// evaluated with overlap-save FFT blocks. The backward pass recomputes the
/// filter responses one channel at a time instead of keeping them, so memory
/// stays at a few channel-lengths per call.
template <typename T>
class LeafFrontend {
 public:
  using Complex = std::complex<T>;

  /// State kept between forward and backward for one input.
  struct Cache {
    FeatureMapT<T> energy;     // pooled envelope E
    FeatureMapT<T> smoothed;   // PCEN EMA track M
    std::vector<Complex> spectra;  // forward DFTs of the input blocks
  };

  explicit LeafFrontend(LeafConfig config = {}) : config_(config) {}

  const LeafConfig& config() const noexcept { return config_; }

  FeatureMapT<T> forward(std::span<const float> x, const LeafParams<T>& p, Cache* cache = nullptr) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    c.energy = envelope(x, p, &c.spectra);
    return pcen(c.energy, p.pcen, &c.smoothed);
  }

  /// Pooled squared-modulus envelope E (the PCEN input).
  FeatureMapT<T> envelope(std::span<const float> x, const LeafParams<T>& p, std::vector<Complex>* spectra_out = nullptr) const {
    check(x, p);
    const std::size_t n = x.size(), channels = p.channels();
    const auto geo = PoolGeometry::make(n, p.pooling.kernel_len, p.pooling.stride);
    FeatureMapT<T> energy(channels, geo.frames);
    energy.frame_seconds = static_cast<double>(p.pooling.stride) / config_.sample_rate;
    for (std::size_t c = 0; c < channels; ++c) energy.band_hz.push_back(static_cast<double>(p.bank.eta[c]) * config_.sample_rate / (2.0 * M_PI));

    Workspace ws(config_.block, p.bank.kernel_len, n);
    std::vector<Complex> local_spectra;
    auto& spectra = spectra_out ? *spectra_out : local_spectra;
    input_spectra(x, ws, spectra);
    const auto kernels = gabor_kernels(p.bank);
    std::vector<Complex> y(n);
    std::vector<double> power(n);
    for (std::size_t c = 0; c < channels; ++c) {
      filter_response(std::span<const Complex>(kernels).subspan(c * p.bank.kernel_len, p.bank.kernel_len), spectra, ws, y);
      for (std::size_t i = 0; i < n; ++i) power[i] = std::norm(std::complex<double>(y[i]));
      const auto w = gaussian_lowpass<double>(p.pooling.width[c], p.pooling.kernel_len);
      auto row = energy.row(c);
      for (std::size_t q = 0; q < geo.frames; ++q) {
        const auto [lo, hi, base] = pool_window(q, geo, p.pooling.stride, w.size(), n);
        double acc = 0.0;
        for (std::size_t u = lo; u < hi; ++u) acc += w[u] * power[base + u];
        row[q] = static_cast<T>(acc);
      }
    }
    return energy;
  }

  /// Gradients of a scalar loss with respect to every learnable parameter,
  /// given d loss / d output. Returned in a LeafParams-shaped container.
  LeafParams<T> backward(std::span<const float> x, const LeafParams<T>& p, const Cache& cache,
                         const FeatureMapT<T>& grad_out) const {
    check(x, p);
    const std::size_t n = x.size(), channels = p.channels(), L = p.bank.kernel_len;
    const auto geo = PoolGeometry::make(n, p.pooling.kernel_len, p.pooling.stride);
    if (grad_out.bands != channels || grad_out.frames != geo.frames) throw std::invalid_argument("leaf backward: gradient shape mismatch");

    const auto pg = pcen_backward(cache.energy, cache.smoothed, p.pcen, grad_out);
    LeafParams<T> g = zeros_like(p);
    g.pcen.alpha = pg.alpha;
    g.pcen.delta = pg.delta;
    g.pcen.root = pg.root;
    g.pcen.smooth = pg.smooth;

    Workspace ws(config_.block, L, n);
    std::vector<Complex> local_spectra;
    const std::vector<Complex>* spectra = &cache.spectra;
    if (spectra->size() != ws.blocks * ws.fft_size) {
      input_spectra(x, ws, local_spectra);
      spectra = &local_spectra;
    }
    const auto kernels = gabor_kernels(p.bank);
    std::vector<Complex> y(n), corr(L);
    std::vector<double> grad_power(n), power(n);
    std::vector<Complex> grad_y(n);
    const double half = 0.5 * static_cast<double>(p.pooling.kernel_len - 1);
    for (std::size_t c = 0; c < channels; ++c) {
      filter_response(std::span<const Complex>(kernels).subspan(c * L, L), *spectra, ws, y);

      // Pooling: scatter dL/dE back to the full-rate power, and accumulate
      // the width gradient dw/dwidth = w * d^2 / (width^3 half^2).
      const double width = p.pooling.width[c];
      const auto w = gaussian_lowpass<double>(width, p.pooling.kernel_len);
      std::vector<double> dw(w.size());
      for (std::size_t u = 0; u < w.size(); ++u) {
        const double d = static_cast<double>(u) - half;
        dw[u] = w[u] * d * d / (width * width * width * half * half);
      }
      for (std::size_t i = 0; i < n; ++i) power[i] = std::norm(std::complex<double>(y[i]));
      std::fill(grad_power.begin(), grad_power.end(), 0.0);
      double g_width = 0.0;
      const auto ge = pg.input.row(c);
      for (std::size_t q = 0; q < geo.frames; ++q) {
        const double gq = ge[q];
        const auto [lo, hi, base] = pool_window(q, geo, p.pooling.stride, w.size(), n);
        double acc = 0.0;
        double* gp = grad_power.data() + base;
        const double* pw = power.data() + base;
        for (std::size_t u = lo; u < hi; ++u) {
          gp[u] += gq * w[u];
          acc += dw[u] * pw[u];
        }
        g_width += gq * acc;
      }
      g.pooling.width[c] = static_cast<T>(g_width);

      // |y|^2 -> y, then correlate with the input to get dL/dk.
      for (std::size_t i = 0; i < n; ++i) grad_y[i] = static_cast<T>(2.0 * grad_power[i]) * y[i];
      kernel_gradient(grad_y, *spectra, ws, corr);

      const double eta = p.bank.eta[c], sigma = p.bank.sigma[c];
      const double norm = 1.0 / (std::sqrt(2.0 * M_PI) * sigma);
      double g_eta = 0.0, g_sigma = 0.0;
      for (std::size_t j = 0; j < L; ++j) {
        const double t = p.bank.tap_time(j);
        const double gauss = norm * std::exp(-t * t / (2.0 * sigma * sigma));
        const double cs = std::cos(eta * t), sn = std::sin(eta * t);
        const double cr = corr[j].real(), ci = corr[j].imag();
        g_eta += t * gauss * (ci * cs - cr * sn);
        g_sigma += (cr * cs + ci * sn) * gauss * (t * t / (sigma * sigma * sigma) - 1.0 / sigma);
      }
      g.bank.eta[c] = static_cast<T>(g_eta);
      g.bank.sigma[c] = static_cast<T>(g_sigma);
    }
    return g;
  }

  static LeafParams<T> zeros_like(const LeafParams<T>& p) {
    LeafParams<T> g = p;
    g.for_each_vector([](const char*, std::vector<T>& v) { std::fill(v.begin(), v.end(), T{}); });
    return g;
  }

 private:
  // Plain complex product, without the library's inf/nan recovery path.
  static Complex mul(Complex a, Complex b) {
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
  }

  struct PoolSpan {
    std::size_t lo, hi;  // valid tap range
    std::size_t base;    // sample index of tap 0 (may wrap below zero; only base + [lo, hi) is used)
  };

  // Taps u of frame q read sample q * stride - pad_left + u; clip to [0, n).
  static PoolSpan pool_window(std::size_t q, const PoolGeometry& geo, std::size_t stride, std::size_t taps, std::size_t n) {
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(q * stride) - geo.pad_left;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -start);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(taps), static_cast<std::ptrdiff_t>(n) - start);
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(std::max(lo, hi)), static_cast<std::size_t>(start)};
  }

  struct Workspace {
    Workspace(std::size_t block, std::size_t kernel_len, std::size_t n)
        : fft_size(block), valid(block - kernel_len + 1), blocks((n + valid - 1) / valid), fft(block) {}
    std::size_t fft_size;
    std::size_t valid;   // outputs per block
    std::size_t blocks;
    ComplexFft<T> fft;
  };

  void check(std::span<const float> x, const LeafParams<T>& p) const {
    if (x.size() != config_.chunk_samples)
      throw DataError("leaf frontend expects " + std::to_string(config_.chunk_samples) + " samples, got " + std::to_string(x.size()));
    const std::size_t c = p.channels();
    if (p.bank.sigma.size() != c || p.pooling.width.size() != c || p.pcen.alpha.size() != c || p.pcen.delta.size() != c ||
        p.pcen.root.size() != c || p.pcen.smooth.size() != c)
      throw std::invalid_argument("leaf parameters have inconsistent channel counts");
    if (p.bank.kernel_len == 0 || config_.block < 2 * p.bank.kernel_len)
      throw std::invalid_argument("leaf: FFT block must be at least twice the kernel length");
    for (std::size_t i = 0; i < c; ++i)
      if (!(p.bank.sigma[i] > 0) || !(p.pooling.width[i] > 0))
        throw std::invalid_argument("leaf: widths must be positive (filter " + std::to_string(i) + ")");
  }

  // Block b covers outputs [b*valid, (b+1)*valid) and reads input samples
  // starting at b*valid - L/2.
  void input_spectra(std::span<const float> x, Workspace& ws, std::vector<Complex>& spectra) const {
    const std::size_t B = ws.fft_size;
    const auto h = static_cast<std::ptrdiff_t>(ws.fft_size - ws.valid + 1) / 2;
    spectra.assign(ws.blocks * B, Complex{});
    auto buf = ws.fft.buffer();
    for (std::size_t b = 0; b < ws.blocks; ++b) {
      const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(b * ws.valid) - h;
      for (std::size_t i = 0; i < B; ++i) {
        const std::ptrdiff_t idx = start + static_cast<std::ptrdiff_t>(i);
        buf[i] = (idx >= 0 && idx < static_cast<std::ptrdiff_t>(x.size())) ? Complex(x[static_cast<std::size_t>(idx)], 0) : Complex{};
      }
      ws.fft.forward();
      std::copy(buf.begin(), buf.end(), spectra.begin() + static_cast<std::ptrdiff_t>(b * B));
    }
  }

  void filter_response(std::span<const Complex> kernel, const std::vector<Complex>& spectra, Workspace& ws,
                       std::vector<Complex>& y) const {
    const std::size_t B = ws.fft_size, n = y.size();
    auto buf = ws.fft.buffer();
    std::fill(buf.begin(), buf.end(), Complex{});
    const T scale = T(1) / static_cast<T>(B);
    for (std::size_t j = 0; j < kernel.size(); ++j) buf[j] = kernel[j] * scale;
    ws.fft.backward();
    std::vector<Complex> kspec(buf.begin(), buf.end());
    for (std::size_t b = 0; b < ws.blocks; ++b) {
      const Complex* xs = spectra.data() + b * B;
      for (std::size_t k = 0; k < B; ++k) buf[k] = mul(kspec[k], xs[k]);
      ws.fft.backward();
      const std::size_t p0 = b * ws.valid;
      const std::size_t count = std::min(ws.valid, n - p0);
      std::copy(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(count), y.begin() + static_cast<std::ptrdiff_t>(p0));
    }
  }

  // corr[j] = sum_p g[p] x[p + j - L/2], accumulated in the frequency domain.
  void kernel_gradient(const std::vector<Complex>& g, const std::vector<Complex>& spectra, Workspace& ws,
                       std::vector<Complex>& corr) const {
    const std::size_t B = ws.fft_size, n = g.size();
    auto buf = ws.fft.buffer();
    std::vector<Complex> acc(B, Complex{});
    for (std::size_t b = 0; b < ws.blocks; ++b) {
      const std::size_t p0 = b * ws.valid;
      const std::size_t count = std::min(ws.valid, n - p0);
      std::fill(buf.begin(), buf.end(), Complex{});
      std::copy(g.begin() + static_cast<std::ptrdiff_t>(p0), g.begin() + static_cast<std::ptrdiff_t>(p0 + count), buf.begin());
      ws.fft.backward();
      const Complex* xs = spectra.data() + b * B;
      for (std::size_t k = 0; k < B; ++k) acc[k] += mul(buf[k], xs[k]);
    }
    std::copy(acc.begin(), acc.end(), buf.begin());
    ws.fft.backward();
    const T scale = T(1) / static_cast<T>(B);
    for (std::size_t j = 0; j < corr.size(); ++j) corr[j] = buf[j] * scale;
  }

  LeafConfig config_;
};

}  // namespace insectleaf::leaf
