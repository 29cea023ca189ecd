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
#include <span>
#include <stdexcept>
#include <vector>

#include "insectleaf/feature_map.hpp"
#include "insectleaf/leaf/params.hpp"

namespace insectleaf::leaf {

/// Gradients of a scalar loss with respect to the PCEN parameters and input.
template <typename T>
struct PcenGrads {
  std::vector<T> alpha, delta, root, smooth;
  FeatureMapT<T> input;
};

/// One channel of PCEN. `smoothed` receives the EMA track M.
template <typename T>
void pcen_channel(std::span<const T> energy, double alpha, double delta, double root, double smooth, double floor,
                  std::span<T> out, std::span<T> smoothed) {
  const double rho = 1.0 / root;
  const double delta_pow = std::pow(delta, rho);
  double m = 0.0;
  for (std::size_t q = 0; q < energy.size(); ++q) {
    const double e = energy[q];
    if (!(e >= 0.0)) throw std::invalid_argument("pcen: energy must be non-negative");
    m = q == 0 ? e : (1.0 - smooth) * m + smooth * e;
    smoothed[q] = static_cast<T>(m);
    const double a = e * std::pow(floor + m, -alpha);
    out[q] = static_cast<T>(std::pow(a + delta, rho) - delta_pow);
  }
}

/// PCEN over every channel of an energy map. `smoothed` (optional) keeps
/// the EMA tracks for the backward pass.
template <typename T>
FeatureMapT<T> pcen(const FeatureMapT<T>& energy, const PcenParams<T>& p, FeatureMapT<T>* smoothed = nullptr) {
  if (p.alpha.size() != energy.bands) throw std::invalid_argument("pcen: parameter count does not match channel count");
  FeatureMapT<T> out(energy.bands, energy.frames);
  out.band_hz = energy.band_hz;
  out.frame_seconds = energy.frame_seconds;
  FeatureMapT<T> local;
  FeatureMapT<T>& m = smoothed ? *smoothed : local;
  m = FeatureMapT<T>(energy.bands, energy.frames);
  for (std::size_t n = 0; n < energy.bands; ++n)
    pcen_channel<T>(energy.row(n), p.alpha[n], p.delta[n], p.root[n], p.smooth[n], p.floor, out.row(n), m.row(n));
  return out;
}

/// Reverse-mode pass through PCEN, including the EMA recursion.
template <typename T>
PcenGrads<T> pcen_backward(const FeatureMapT<T>& energy, const FeatureMapT<T>& smoothed, const PcenParams<T>& p,
                           const FeatureMapT<T>& grad_out) {
  const std::size_t channels = energy.bands, frames = energy.frames;
  PcenGrads<T> g;
  g.alpha.assign(channels, T{});
  g.delta.assign(channels, T{});
  g.root.assign(channels, T{});
  g.smooth.assign(channels, T{});
  g.input = FeatureMapT<T>(channels, frames);
  std::vector<double> grad_m(frames);
  for (std::size_t n = 0; n < channels; ++n) {
    const double alpha = p.alpha[n], delta = p.delta[n], root = p.root[n], s = p.smooth[n], eps = p.floor;
    const double rho = 1.0 / root;
    const double delta_pow = std::pow(delta, rho);
    const double delta_log_term = delta > 0.0 ? delta_pow * std::log(delta) : 0.0;
    const double delta_slope = delta > 0.0 ? rho * std::pow(delta, rho - 1.0) : 0.0;
    double ga = 0.0, gd = 0.0, grho = 0.0, gs = 0.0;
    const auto e_row = energy.row(n);
    const auto m_row = smoothed.row(n);
    const auto go_row = grad_out.row(n);
    auto ge_row = g.input.row(n);
    for (std::size_t q = 0; q < frames; ++q) {
      const double e = e_row[q], m = m_row[q], go = go_row[q];
      const double base = eps + m;
      const double a = e * std::pow(base, -alpha);
      const double z = a + delta;
      const double gz = z > 0.0 ? go * rho * std::pow(z, rho - 1.0) : 0.0;
      gd += gz - go * delta_slope;
      grho += go * ((z > 0.0 ? std::pow(z, rho) * std::log(z) : 0.0) - delta_log_term);
      ga += gz * a * -std::log(base);
      ge_row[q] = static_cast<T>(gz * std::pow(base, -alpha));
      grad_m[q] = base > 0.0 ? -alpha * gz * a / base : 0.0;
    }
    // M[q] = (1 - s) M[q-1] + s E[q] for q >= 1, M[0] = E[0].
    double lambda = 0.0;
    for (std::size_t q = frames; q-- > 0;) {
      lambda = grad_m[q] + (1.0 - s) * lambda;
      if (q == 0) {
        ge_row[0] = static_cast<T>(ge_row[0] + lambda);
      } else {
        ge_row[q] = static_cast<T>(ge_row[q] + s * lambda);
        gs += lambda * (e_row[q] - m_row[q - 1]);
      }
    }
    g.alpha[n] = static_cast<T>(ga);
    g.delta[n] = static_cast<T>(gd);
    g.root[n] = static_cast<T>(grho * -1.0 / (root * root));
    g.smooth[n] = static_cast<T>(gs);
  }
  return g;
}

}  // namespace insectleaf::leaf
