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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include "insectleaf/leaf/frontend.hpp"
#include "insectleaf/mel.hpp"
#include "insectleaf/rng.hpp"
#include "support.hpp"

namespace insectleaf::leaf {
namespace {

LeafParams<double> reduced_params() {
  LeafInit init;
  init.n_filters = 8;
  auto p = init_leaf_params<double>(init);
  for (std::size_t i = 0; i < 8; ++i) {
    p.pcen.alpha[i] = 0.9;
    p.pcen.delta[i] = 1.5;
    p.pcen.root[i] = 1.7;
    p.pcen.smooth[i] = 0.1;
    p.bank.sigma[i] = std::min(p.bank.sigma[i], 40.0);
    p.pooling.width[i] = 0.3;
  }
  return p;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n, mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

TEST(LeafInitialisation, MelCentersMatchFilterbankPeaks) {
  const auto p = init_leaf_params<double>();
  ASSERT_EQ(p.channels(), 64u);
  MelFilterbank bank(MelConfig{});
  for (std::size_t n = 0; n < 64; ++n) {
    const double hz = p.bank.eta[n] * 44100.0 / (2.0 * M_PI);
    EXPECT_NEAR(hz, bank.center_hz(n), 0.01 * bank.center_hz(n)) << n;
    if (n > 0) EXPECT_GT(p.bank.eta[n], p.bank.eta[n - 1]);
  }
  EXPECT_LT(p.bank.eta.back(), M_PI);
  EXPECT_TRUE(within_constraints(p));
}

TEST(LeafInitialisation, MelWidthsMatchTriangleFwhm) {
  const auto p = init_leaf_params<double>();
  const auto bp = mel_breakpoints(64, 0.0, 22050.0);
  for (std::size_t n = 0; n < 64; ++n) {
    const double fwhm_hz = 0.5 * (bp[n + 2] - bp[n]);
    const double sigma = std::clamp(kFwhmFactor * 44100.0 / (2.0 * M_PI * fwhm_hz), GaborBank<double>::sigma_min(), 294.0);
    EXPECT_NEAR(p.bank.sigma[n], sigma, 1e-9 * sigma) << n;
  }
}

TEST(LeafInitialisation, LinearScaleIsEquallySpaced) {
  LeafInit init;
  init.scale = InitScale::kLinear;
  const auto p = init_leaf_params<double>(init);
  const double step = p.bank.eta[1] - p.bank.eta[0];
  for (std::size_t n = 1; n < 64; ++n) EXPECT_NEAR(p.bank.eta[n] - p.bank.eta[n - 1], step, 1e-12);
  EXPECT_NEAR(step, 2.0 * M_PI * (22050.0 / 65.0) / 44100.0, 1e-12);
  EXPECT_EQ(parse_init_scale("linear"), InitScale::kLinear);
  EXPECT_THROW(parse_init_scale("log"), ConfigError);
}

TEST(LeafInitialisation, ParameterInventory) {
  const auto p = init_leaf_params<float>();
  EXPECT_EQ(p.parameter_count(), 448u);
  std::size_t total = 0, vectors = 0;
  p.for_each_vector([&](const auto&, const auto& v) {
    total += v.size();
    ++vectors;
  });
  EXPECT_EQ(vectors, 7u);
  EXPECT_EQ(total, 448u);
}

TEST(GaborKernels, ZeroCenterIsRealSymmetricGaussian) {
  GaborBank<double> bank;
  bank.eta = {0.0};
  bank.sigma = {20.0};
  const auto k = gabor_kernels(bank);
  for (std::size_t j = 0; j < 294; ++j) {
    EXPECT_EQ(k[j].imag(), 0.0);
    EXPECT_NEAR(k[j].real(), k[293 - j].real(), 1e-15);
  }
  EXPECT_THROW(([] {
                 GaborBank<double> b;
                 b.eta = {1.0};
                 b.sigma = {0.0};
                 return gabor_kernels(b);
               }()),
               std::invalid_argument);
}

std::vector<double> kernel_magnitude(double eta, double sigma, std::size_t nfft) {
  GaborBank<double> bank;
  bank.eta = {eta};
  bank.sigma = {sigma};
  const auto k = gabor_kernels(bank);
  std::vector<double> mag(nfft / 2 + 1);
  for (std::size_t b = 0; b < mag.size(); ++b) {
    std::complex<double> acc = 0.0;
    for (std::size_t j = 0; j < k.size(); ++j) acc += k[j] * std::polar(1.0, -2.0 * M_PI * static_cast<double>(b * j) / nfft);
    mag[b] = std::abs(acc);
  }
  return mag;
}

TEST(GaborKernels, SpectrumPeaksAtCenter) {
  const std::size_t nfft = 2048;
  for (double sigma : {8.0, 20.0, 60.0}) {
    for (double eta : {0.3, 1.1, 2.5}) {
      const auto mag = kernel_magnitude(eta, sigma, nfft);
      const auto peak = static_cast<double>(std::max_element(mag.begin(), mag.end()) - mag.begin());
      EXPECT_NEAR(peak, eta * nfft / (2.0 * M_PI), 1.0) << "sigma " << sigma << " eta " << eta;
    }
  }
}

double fwhm_bins(const std::vector<double>& mag) {
  const auto peak = static_cast<std::size_t>(std::max_element(mag.begin(), mag.end()) - mag.begin());
  const double half = 0.5 * mag[peak];
  std::size_t lo = peak, hi = peak;
  while (lo > 0 && mag[lo] > half) --lo;
  while (hi + 1 < mag.size() && mag[hi] > half) ++hi;
  const double l = static_cast<double>(lo) + (half - mag[lo]) / (mag[lo + 1] - mag[lo]);
  const double h = static_cast<double>(hi - 1) + (mag[hi - 1] - half) / (mag[hi - 1] - mag[hi]);
  return h - l;
}

TEST(GaborKernels, DoublingSigmaHalvesBandwidth) {
  const std::size_t nfft = 8192;
  for (double sigma : {6.0, 12.0, 24.0}) {
    const double w1 = fwhm_bins(kernel_magnitude(1.5, sigma, nfft));
    const double w2 = fwhm_bins(kernel_magnitude(1.5, 2.0 * sigma, nfft));
    EXPECT_NEAR(w2 / w1, 0.5, 0.025) << sigma;
    EXPECT_NEAR(w1, kFwhmFactor / sigma * nfft / (2.0 * M_PI), 0.02 * w1);
  }
}

TEST(LeafEnvelope, FftConvolutionMatchesDirectSum) {
  const std::size_t n = 4096, L = 294;
  const auto x = testing::white_noise(n, 3, 0.3);
  const auto p = reduced_params();
  LeafConfig cfg;
  cfg.chunk_samples = n;
  const auto env = LeafFrontend<double>(cfg).envelope(x, p);
  const auto k = gabor_kernels(p.bank);
  const auto geo = PoolGeometry::make(n, 294, 147);
  ASSERT_EQ(env.frames, geo.frames);
  for (std::size_t c : {std::size_t{0}, std::size_t{3}, std::size_t{7}}) {
    std::vector<double> power(n);
    for (std::size_t t = 0; t < n; ++t) {
      std::complex<double> y = 0.0;
      for (std::size_t j = 0; j < L; ++j) {
        const auto idx = static_cast<std::ptrdiff_t>(t + j) - 147;
        if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(n)) y += k[c * L + j] * static_cast<double>(x[static_cast<std::size_t>(idx)]);
      }
      power[t] = std::norm(y);
    }
    const auto w = gaussian_lowpass<double>(p.pooling.width[c], 294);
    double worst = 0.0, scale = 0.0;
    for (std::size_t q = 0; q < geo.frames; ++q) {
      double acc = 0.0;
      for (std::size_t u = 0; u < 294; ++u) {
        const auto idx = static_cast<std::ptrdiff_t>(q * 147 + u) - geo.pad_left;
        if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(n)) acc += w[u] * power[static_cast<std::size_t>(idx)];
      }
      worst = std::max(worst, std::abs(acc - env.at(c, q)));
      scale = std::max(scale, std::abs(acc));
    }
    EXPECT_LT(worst, 1e-9 * scale) << "channel " << c;
  }
}

struct GradCase {
  std::vector<float> x;
  FeatureMapT<double> weights;
  LeafConfig cfg;
};

GradCase grad_case() {
  GradCase g;
  g.x = testing::white_noise(2048, 11, 0.3);
  g.cfg.chunk_samples = 2048;
  const auto geo = PoolGeometry::make(2048, 294, 147);
  g.weights = FeatureMapT<double>(8, geo.frames);
  Rng rng(12);
  for (auto& v : g.weights.values) v = rng.normal();
  return g;
}

double weighted_sum(const LeafFrontend<double>& fe, const GradCase& g, const LeafParams<double>& p) {
  const auto out = fe.forward(g.x, p);
  double s = 0.0;
  for (std::size_t i = 0; i < out.values.size(); ++i) s += out.values[i] * g.weights.values[i];
  return s;
}

std::vector<std::vector<double>> finite_differences(const GradCase& g, const LeafParams<double>& p) {
  LeafFrontend<double> fe(g.cfg);
  std::vector<std::vector<double>> out;
  for (std::size_t vi = 0; vi < 7; ++vi) {
    std::vector<double> grads;
    for (std::size_t ch = 0; ch < p.channels(); ++ch) {
      auto plus = p, minus = p;
      std::vector<std::vector<double>*> a, b;
      plus.for_each_vector([&](const auto&, std::vector<double>& v) { a.push_back(&v); });
      minus.for_each_vector([&](const auto&, std::vector<double>& v) { b.push_back(&v); });
      const double h = 1e-6 * std::max(1.0, std::abs((*a[vi])[ch]));
      (*a[vi])[ch] += h;
      (*b[vi])[ch] -= h;
      grads.push_back((weighted_sum(fe, g, plus) - weighted_sum(fe, g, minus)) / (2.0 * h));
    }
    out.push_back(std::move(grads));
  }
  return out;
}

template <typename T>
std::vector<std::vector<double>> analytic(const GradCase& g, const LeafParams<double>& p) {
  LeafFrontend<T> fe(g.cfg);
  const auto pt = p.template cast<T>();
  typename LeafFrontend<T>::Cache cache;
  fe.forward(g.x, pt, &cache);
  FeatureMapT<T> w(g.weights.bands, g.weights.frames);
  for (std::size_t i = 0; i < w.values.size(); ++i) w.values[i] = static_cast<T>(g.weights.values[i]);
  const auto grads = fe.backward(g.x, pt, cache, w);
  std::vector<std::vector<double>> out;
  grads.for_each_vector([&](const auto&, const std::vector<T>& v) { out.emplace_back(v.begin(), v.end()); });
  return out;
}

double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

TEST(LeafGradients, DoublePrecisionMatchesFiniteDifferences) {
  const auto g = grad_case();
  const auto p = reduced_params();
  const auto fd = finite_differences(g, p);
  const auto an = analytic<double>(g, p);
  const char* names[] = {"eta", "sigma", "pool_width", "alpha", "delta", "root", "smooth"};
  for (std::size_t vi = 0; vi < 7; ++vi)
    for (std::size_t ch = 0; ch < 8; ++ch) EXPECT_LT(rel_error(fd[vi][ch], an[vi][ch]), 1e-5) << names[vi] << "[" << ch << "]";
}

TEST(LeafGradients, SinglePrecisionMatchesFiniteDifferences) {
  const auto g = grad_case();
  const auto p = reduced_params();
  const auto fd = finite_differences(g, p);
  const auto an = analytic<float>(g, p);
  const char* names[] = {"eta", "sigma", "pool_width", "alpha", "delta", "root", "smooth"};
  for (std::size_t vi = 0; vi < 7; ++vi)
    for (std::size_t ch = 0; ch < 8; ++ch) EXPECT_LT(rel_error(fd[vi][ch], an[vi][ch]), 1e-3) << names[vi] << "[" << ch << "]";
}

FeatureMapT<double> constant_energy(double value, std::size_t frames = 50) { return FeatureMapT<double>(1, frames, value); }

PcenParams<double> pcen_one(double alpha, double delta, double root, double smooth, double floor) {
  PcenParams<double> p;
  p.alpha = {alpha};
  p.delta = {delta};
  p.root = {root};
  p.smooth = {smooth};
  p.floor = floor;
  return p;
}

TEST(Pcen, ReferenceIdentities) {
  FeatureMapT<double> e(1, 40);
  Rng rng(4);
  for (auto& v : e.values) v = rng.uniform(0.1, 5.0);
  const auto identity = pcen(e, pcen_one(0.0, 0.0, 1.0, 0.3, 1e-6));
  for (std::size_t i = 0; i < e.values.size(); ++i) EXPECT_DOUBLE_EQ(identity.values[i], e.values[i]);
  const auto ones = pcen(e, pcen_one(1.0, 0.0, 1.0, 1.0, 0.0));
  for (double v : ones.values) EXPECT_NEAR(v, 1.0, 1e-15);
  const auto twos = pcen(constant_energy(4.0), pcen_one(0.5, 0.0, 1.0, 0.2, 0.0));
  for (double v : twos.values) EXPECT_NEAR(v, 2.0, 1e-15);
}

TEST(Pcen, ZeroEnergyGivesZeroOutput) {
  const auto out = pcen(constant_energy(0.0), pcen_one(0.96, 2.0, 2.0, 0.04, 1e-6));
  for (double v : out.values) EXPECT_EQ(v, 0.0);
}

TEST(Pcen, RootActsAsInverseExponent) {
  FeatureMapT<double> e(1, 30);
  Rng rng(5);
  for (auto& v : e.values) v = rng.uniform(0.0, 3.0);
  const double alpha = 0.8, delta = 2.0, root = 2.0, s = 0.1, eps = 1e-6;
  const auto out = pcen(e, pcen_one(alpha, delta, root, s, eps));
  double m = 0.0;
  for (std::size_t t = 0; t < e.frames; ++t) {
    m = t == 0 ? e.values[0] : (1.0 - s) * m + s * e.values[t];
    const double ref = std::sqrt(e.values[t] / std::pow(eps + m, alpha) + delta) - std::sqrt(delta);
    EXPECT_NEAR(out.values[t], ref, 1e-12);
  }
}

TEST(Pcen, GainInvariantOnConstantEnergy) {
  const auto p = pcen_one(1.0, 0.0, 1.0, 0.04, 0.0);
  for (double level : {1e-3, 1.0, 250.0}) {
    const auto out = pcen(constant_energy(level), p);
    for (double v : out.values) EXPECT_NEAR(v, 1.0, 1e-12) << level;
  }
}

TEST(Pcen, RejectsNegativeEnergy) {
  auto e = constant_energy(1.0);
  e.values[7] = -0.5;
  EXPECT_THROW(pcen(e, pcen_one(0.5, 1.0, 1.0, 0.1, 1e-6)), std::invalid_argument);
}

TEST(Constraints, ProjectionClampsAndIsIdempotent) {
  auto p = init_leaf_params<double>();
  const auto before = p;
  project_constraints(p);
  EXPECT_EQ(p.bank.eta, before.bank.eta);
  EXPECT_EQ(p.bank.sigma, before.bank.sigma);
  p.bank.eta[5] = 1.2 * M_PI;
  p.bank.eta[6] = -0.1;
  p.bank.sigma[7] = -3.0;
  p.bank.sigma[8] = 1e4;
  p.pooling.width[0] = 0.0;
  p.pcen.smooth[1] = 0.0;
  p.pcen.smooth[2] = 1.5;
  p.pcen.alpha[3] = 1.4;
  p.pcen.delta[4] = -1.0;
  p.pcen.root[5] = 0.5;
  EXPECT_FALSE(within_constraints(p));
  project_constraints(p);
  EXPECT_DOUBLE_EQ(p.bank.eta[5], M_PI);
  EXPECT_DOUBLE_EQ(p.bank.eta[6], 0.0);
  EXPECT_DOUBLE_EQ(p.bank.sigma[7], GaborBank<double>::sigma_min());
  EXPECT_DOUBLE_EQ(p.bank.sigma[8], 294.0);
  EXPECT_GT(p.pooling.width[0], 0.0);
  EXPECT_GT(p.pcen.smooth[1], 0.0);
  EXPECT_DOUBLE_EQ(p.pcen.smooth[2], 1.0);
  EXPECT_DOUBLE_EQ(p.pcen.alpha[3], 1.0);
  EXPECT_DOUBLE_EQ(p.pcen.delta[4], 0.0);
  EXPECT_DOUBLE_EQ(p.pcen.root[5], 1.0);
  const auto once = p;
  project_constraints(p);
  EXPECT_EQ(p.bank.eta, once.bank.eta);
  EXPECT_EQ(p.bank.sigma, once.bank.sigma);
  EXPECT_EQ(p.pooling.width, once.pooling.width);
  EXPECT_EQ(p.pcen.smooth, once.pcen.smooth);
  EXPECT_TRUE(within_constraints(p));
}

TEST(LeafFrontend, FullChunkShapeAndZeroInput) {
  LeafFrontend<float> fe;
  const auto p = init_leaf_params<float>();
  const auto out = fe.forward(testing::white_noise(220500, 6), p);
  EXPECT_EQ(out.bands, 64u);
  EXPECT_EQ(out.frames, 1500u);
  EXPECT_TRUE(out.all_finite());
  const auto zero = fe.forward(std::vector<float>(220500, 0.0f), p);
  for (float v : zero.values) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(fe.forward(std::vector<float>(1000, 0.0f), p), std::exception);
}

TEST(LeafFrontend, ToneSelectsItsChannel) {
  LeafFrontend<double> fe;
  const auto p = init_leaf_params<double>();
  for (std::size_t k : {std::size_t{12}, std::size_t{30}, std::size_t{50}}) {
    const double hz = p.bank.eta[k] * 44100.0 / (2.0 * M_PI);
    const auto env = fe.envelope(testing::sine(220500, hz), p);
    std::vector<double> mean(64, 0.0);
    for (std::size_t c = 0; c < 64; ++c)
      for (std::size_t q = 0; q < env.frames; ++q) mean[c] += env.at(c, q);
    EXPECT_EQ(static_cast<std::size_t>(std::max_element(mean.begin(), mean.end()) - mean.begin()), k);
  }
}

TEST(LeafFrontend, InitialisedEnvelopeTracksMelBands) {
  const auto x = testing::white_noise(220500, 7);
  const auto env = LeafFrontend<double>().envelope(x, init_leaf_params<double>());
  const auto mel = MelFrontend().power(x);
  std::vector<double> a(64), b(64);
  for (std::size_t c = 0; c < 64; ++c) {
    for (std::size_t q = 0; q < 1500; ++q) {
      a[c] += std::log(env.at(c, q) + 1e-6);
      b[c] += std::log(mel.at(c, q) + 1e-6);
    }
    a[c] /= 1500.0;
    b[c] /= 1500.0;
  }
  EXPECT_GT(pearson(a, b), 0.9);
}

TEST(LeafSnapshot, RoundTrip) {
  testing::TempDir dir("snap");
  auto p = init_leaf_params<double>();
  p.pcen.alpha[3] = 0.123456789;
  write_snapshot(dir / "s.csv", p);
  const auto q = read_snapshot<double>(dir / "s.csv");
  ASSERT_EQ(q.channels(), 64u);
  for (std::size_t n = 0; n < 64; ++n) {
    EXPECT_NEAR(q.bank.eta[n], p.bank.eta[n], 1e-14);
    EXPECT_DOUBLE_EQ(q.bank.sigma[n], p.bank.sigma[n]);
    EXPECT_DOUBLE_EQ(q.pcen.alpha[n], p.pcen.alpha[n]);
  }
}

}  // namespace
}  // namespace insectleaf::leaf
