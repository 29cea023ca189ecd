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
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "insectleaf/csv.hpp"
#include "insectleaf/error.hpp"
#include "insectleaf/mel.hpp"

namespace insectleaf::leaf {

enum class InitScale { kMel, kLinear };

inline InitScale parse_init_scale(std::string_view s) {
  if (s == "mel") return InitScale::kMel;
  if (s == "linear") return InitScale::kLinear;
  throw ConfigError("unknown filter initialisation scale '" + std::string(s) + "' (expected mel or linear)");
}

inline std::string_view to_string(InitScale s) { return s == InitScale::kMel ? "mel" : "linear"; }

/// Constant over the whole bank: sqrt(8 ln 2), the FWHM of a unit Gaussian.
inline constexpr double kFwhmFactor = 2.3548200450309493;

/// Complex Gabor filterbank. Centre frequencies are in radians per sample,
/// widths are the time-domain Gaussian standard deviation in samples.
template <typename T>
struct GaborBank {
  std::vector<T> eta;
  std::vector<T> sigma;
  std::size_t kernel_len = 294;

  std::size_t size() const { return eta.size(); }

  /// Widest bandwidth allowed: the magnitude response's FWHM equals Nyquist.
  static double sigma_min() { return kFwhmFactor / M_PI; }
  double sigma_max() const { return static_cast<double>(kernel_len); }

  /// Time of kernel tap j relative to the kernel centre (half-integer grid
  /// for even lengths).
  double tap_time(std::size_t j) const { return static_cast<double>(j) - 0.5 * static_cast<double>(kernel_len - 1); }
};

template <typename T>
struct PoolingParams {
  std::vector<T> width;  // Gaussian std as a fraction of the kernel half-span
  std::size_t kernel_len = 294;
  std::size_t stride = 147;

  double width_min() const { return 2.0 / static_cast<double>(kernel_len); }
  static constexpr double width_max() { return 0.5; }
};

/// Per-channel energy normalisation:
///   M[0] = E[0],  M[t] = (1 - s) M[t-1] + s E[t]
///   out  = (E / (floor + M)^alpha + delta)^(1/root) - delta^(1/root)
template <typename T>
struct PcenParams {
  std::vector<T> alpha;
  std::vector<T> delta;
  std::vector<T> root;
  std::vector<T> smooth;
  T floor = static_cast<T>(1e-6);

  static constexpr double smooth_min() { return 1e-6; }
  static constexpr double root_min() { return 1.0; }
};

template <typename T>
struct LeafParams {
  GaborBank<T> bank;
  PoolingParams<T> pooling;
  PcenParams<T> pcen;

  std::size_t channels() const { return bank.size(); }

  /// Learnable scalars: 2 per filter, 1 pooling width, 4 PCEN.
  std::size_t parameter_count() const { return 7 * channels(); }

  template <typename U>
  LeafParams<U> cast() const {
    LeafParams<U> o;
    const auto cv = [](const std::vector<T>& v) { return std::vector<U>(v.begin(), v.end()); };
    o.bank.eta = cv(bank.eta);
    o.bank.sigma = cv(bank.sigma);
    o.bank.kernel_len = bank.kernel_len;
    o.pooling.width = cv(pooling.width);
    o.pooling.kernel_len = pooling.kernel_len;
    o.pooling.stride = pooling.stride;
    o.pcen.alpha = cv(pcen.alpha);
    o.pcen.delta = cv(pcen.delta);
    o.pcen.root = cv(pcen.root);
    o.pcen.smooth = cv(pcen.smooth);
    o.pcen.floor = static_cast<U>(pcen.floor);
    return o;
  }

  /// Visits every learnable vector with a short name, in a fixed order.
  template <typename Fn>
  void for_each_vector(Fn&& fn) {
    fn("eta", bank.eta);
    fn("sigma", bank.sigma);
    fn("pool_width", pooling.width);
    fn("alpha", pcen.alpha);
    fn("delta", pcen.delta);
    fn("root", pcen.root);
    fn("smooth", pcen.smooth);
  }
  template <typename Fn>
  void for_each_vector(Fn&& fn) const {
    const_cast<LeafParams*>(this)->for_each_vector([&](const char* name, std::vector<T>& v) { fn(name, static_cast<const std::vector<T>&>(v)); });
  }
};

struct LeafInit {
  std::size_t n_filters = 64;
  InitScale scale = InitScale::kMel;
  double f_min = 0.0;
  double f_max = 22050.0;
  std::uint32_t sample_rate = 44100;
  std::size_t kernel_len = 294;
  std::size_t pool_len = 294;
  std::size_t pool_stride = 147;
  double pool_width = 0.4;
  double alpha = 0.96;
  double delta = 2.0;
  double root = 2.0;
  double smooth = 0.04;
  double floor = 1e-6;
};

/// Centre frequencies and FWHMs (Hz) a bank is initialised to match.
struct FilterLayout {
  std::vector<double> center_hz;
  std::vector<double> fwhm_hz;
};

inline FilterLayout filter_layout(const LeafInit& init) {
  if (!(init.f_min >= 0.0) || !(init.f_max > init.f_min)) throw ConfigError("filter range must satisfy 0 <= f_min < f_max");
  if (std::abs(init.f_max - init.sample_rate / 2.0) > 1e-9) throw ConfigError("filter range must end at the Nyquist frequency");
  FilterLayout out;
  const std::size_t n = init.n_filters;
  if (init.scale == InitScale::kMel) {
    // Same grid as the mel filterbank: triangle n spans breakpoints n..n+2,
    // and its half-maximum points are the midpoints of its two edges.
    const auto bp = mel_breakpoints(n, init.f_min, init.f_max);
    for (std::size_t i = 0; i < n; ++i) {
      out.center_hz.push_back(bp[i + 1]);
      out.fwhm_hz.push_back(0.5 * (bp[i + 2] - bp[i]));
    }
  } else {
    const double step = (init.f_max - init.f_min) / static_cast<double>(n + 1);
    for (std::size_t i = 0; i < n; ++i) {
      out.center_hz.push_back(init.f_min + step * static_cast<double>(i + 1));
      out.fwhm_hz.push_back(step);
    }
  }
  return out;
}

template <typename T>
void project_constraints(LeafParams<T>& p);

template <typename T>
LeafParams<T> init_leaf_params(const LeafInit& init = {}) {
  const auto layout = filter_layout(init);
  LeafParams<T> p;
  const std::size_t n = init.n_filters;
  p.bank.kernel_len = init.kernel_len;
  p.pooling.kernel_len = init.pool_len;
  p.pooling.stride = init.pool_stride;
  const double fs = init.sample_rate;
  for (std::size_t i = 0; i < n; ++i) {
    p.bank.eta.push_back(static_cast<T>(2.0 * M_PI * layout.center_hz[i] / fs));
    // |K(w)| = exp(-sigma^2 (w - eta)^2 / 2) has FWHM sqrt(8 ln 2) / sigma.
    const double fwhm_rad = 2.0 * M_PI * layout.fwhm_hz[i] / fs;
    p.bank.sigma.push_back(static_cast<T>(kFwhmFactor / fwhm_rad));
  }
  p.pooling.width.assign(n, static_cast<T>(init.pool_width));
  p.pcen.alpha.assign(n, static_cast<T>(init.alpha));
  p.pcen.delta.assign(n, static_cast<T>(init.delta));
  p.pcen.root.assign(n, static_cast<T>(init.root));
  p.pcen.smooth.assign(n, static_cast<T>(init.smooth));
  p.pcen.floor = static_cast<T>(init.floor);
  project_constraints(p);
  return p;
}

/// Clamps every parameter into its admissible box. Idempotent.
template <typename T>
void project_constraints(LeafParams<T>& p) {
  const auto clamp_all = [](std::vector<T>& v, double lo, double hi) {
    for (auto& x : v) {
      if (std::isnan(static_cast<double>(x))) x = static_cast<T>(lo);
      x = static_cast<T>(std::clamp(static_cast<double>(x), lo, hi));
    }
  };
  const double inf = std::numeric_limits<double>::infinity();
  clamp_all(p.bank.eta, 0.0, M_PI);
  clamp_all(p.bank.sigma, GaborBank<T>::sigma_min(), p.bank.sigma_max());
  clamp_all(p.pooling.width, p.pooling.width_min(), PoolingParams<T>::width_max());
  clamp_all(p.pcen.alpha, 0.0, 1.0);
  clamp_all(p.pcen.delta, 0.0, inf);
  clamp_all(p.pcen.root, PcenParams<T>::root_min(), inf);
  clamp_all(p.pcen.smooth, PcenParams<T>::smooth_min(), 1.0);
}

template <typename T>
bool within_constraints(const LeafParams<T>& p) {
  auto q = p;
  project_constraints(q);
  return q.bank.eta == p.bank.eta && q.bank.sigma == p.bank.sigma && q.pooling.width == p.pooling.width &&
         q.pcen.alpha == p.pcen.alpha && q.pcen.delta == p.pcen.delta && q.pcen.root == p.pcen.root &&
         q.pcen.smooth == p.pcen.smooth;
}

/// Complex Gabor kernels, row-major n x kernel_len:
///   k[t] = exp(-t^2 / (2 sigma^2)) / (sqrt(2 pi) sigma) * exp(i eta t)
template <typename T>
std::vector<std::complex<T>> gabor_kernels(const GaborBank<T>& bank) {
  const std::size_t L = bank.kernel_len;
  std::vector<std::complex<T>> k(bank.size() * L);
  for (std::size_t n = 0; n < bank.size(); ++n) {
    const double sigma = bank.sigma[n], eta = bank.eta[n];
    if (!(sigma > 0.0)) throw std::invalid_argument("gabor_kernels: sigma must be positive (filter " + std::to_string(n) + ")");
    const double norm = 1.0 / (std::sqrt(2.0 * M_PI) * sigma);
    for (std::size_t j = 0; j < L; ++j) {
      const double t = bank.tap_time(j);
      const double g = norm * std::exp(-t * t / (2.0 * sigma * sigma));
      k[n * L + j] = {static_cast<T>(g * std::cos(eta * t)), static_cast<T>(g * std::sin(eta * t))};
    }
  }
  return k;
}

/// Gaussian lowpass window of one channel (unnormalised, peak 1 at centre).
template <typename T>
std::vector<T> gaussian_lowpass(double width, std::size_t len) {
  std::vector<T> w(len);
  const double half = 0.5 * static_cast<double>(len - 1);
  for (std::size_t u = 0; u < len; ++u) {
    const double d = (static_cast<double>(u) - half) / (width * half);
    w[u] = static_cast<T>(std::exp(-0.5 * d * d));
  }
  return w;
}

// ---------------------------------------------------------------------------
// Parameter snapshots: a CSV table, one row per filter.

inline const std::vector<std::string>& snapshot_columns() {
  static const std::vector<std::string> cols{"filter_id", "eta_hz", "sigma_samples", "pool_width",
                                             "alpha",     "delta",  "root",          "smooth"};
  return cols;
}

template <typename T>
void write_snapshot(const std::filesystem::path& path, const LeafParams<T>& p, std::uint32_t sample_rate = 44100) {
  CsvTable t;
  t.header = snapshot_columns();
  for (std::size_t n = 0; n < p.channels(); ++n) {
    t.rows.push_back({std::to_string(n), fmt_num(static_cast<double>(p.bank.eta[n]) * sample_rate / (2.0 * M_PI)),
                      fmt_num(p.bank.sigma[n]), fmt_num(p.pooling.width[n]), fmt_num(p.pcen.alpha[n]),
                      fmt_num(p.pcen.delta[n]), fmt_num(p.pcen.root[n]), fmt_num(p.pcen.smooth[n])});
  }
  write_csv(path, t);
}

template <typename T>
LeafParams<T> read_snapshot(const std::filesystem::path& path, std::uint32_t sample_rate = 44100, std::size_t kernel_len = 294,
                            std::size_t pool_len = 294, std::size_t pool_stride = 147) {
  const auto t = read_csv(path);
  std::vector<std::size_t> col;
  for (const auto& c : snapshot_columns()) col.push_back(t.column(c));
  LeafParams<T> p;
  p.bank.kernel_len = kernel_len;
  p.pooling.kernel_len = pool_len;
  p.pooling.stride = pool_stride;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    if (parse_int(r[col[0]], "filter_id") != static_cast<long long>(i)) throw DataError("snapshot rows out of order in " + path.string());
    const auto num = [&](std::size_t c) { return static_cast<T>(parse_double(r[col[c]], snapshot_columns()[c])); };
    p.bank.eta.push_back(static_cast<T>(parse_double(r[col[1]], "eta_hz") * 2.0 * M_PI / sample_rate));
    p.bank.sigma.push_back(num(2));
    p.pooling.width.push_back(num(3));
    p.pcen.alpha.push_back(num(4));
    p.pcen.delta.push_back(num(5));
    p.pcen.root.push_back(num(6));
    p.pcen.smooth.push_back(num(7));
  }
  return p;
}

}  // namespace insectleaf::leaf
