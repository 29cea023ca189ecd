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
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "insectleaf/dataset.hpp"
#include "insectleaf/error.hpp"
#include "insectleaf/parallel.hpp"
#include "insectleaf/rng.hpp"
#include "insectleaf/wav.hpp"

namespace insectleaf {

/// Parameters of one synthetic "species": a tone or band-noise carrier
/// gated by a pulse train.
struct SpeciesSpec {
  std::string name;
  double carrier_hz = 4000.0;
  double pulse_rate_hz = 30.0;
  double duty_cycle = 0.5;          // fraction of each pulse period that sounds; 1 = continuous
  double noise_bandwidth_hz = 0.0;  // 0 = pure tone carrier
  double decay = 0.0;               // exponential decay over one pulse, in nepers
  double carrier_jitter = 0.03;     // per-clip relative spread of the carrier
  double rate_jitter = 0.05;        // per-clip relative spread of the pulse rate

  void validate(std::uint32_t sample_rate = kCanonicalRate) const {
    const double nyquist = sample_rate / 2.0;
    const double top = carrier_hz * (1.0 + carrier_jitter) + noise_bandwidth_hz / 2.0;
    if (!(carrier_hz > 0.0) || !(top < nyquist))
      throw ConfigError("species '" + name + "': carrier plus half bandwidth must stay below Nyquist");
    if (!(noise_bandwidth_hz >= 0.0) || noise_bandwidth_hz / 2.0 >= carrier_hz * (1.0 - carrier_jitter))
      throw ConfigError("species '" + name + "': noise band must lie above 0 Hz");
    if (!(pulse_rate_hz > 0.0) || !(pulse_rate_hz * (1.0 + rate_jitter) < nyquist))
      throw ConfigError("species '" + name + "': pulse rate must be positive and below Nyquist");
    if (!(duty_cycle > 0.0 && duty_cycle <= 1.0)) throw ConfigError("species '" + name + "': duty cycle must be in (0, 1]");
    if (!(decay >= 0.0)) throw ConfigError("species '" + name + "': decay must be non-negative");
    if (!(carrier_jitter >= 0.0 && carrier_jitter < 0.5) || !(rate_jitter >= 0.0 && rate_jitter < 0.5))
      throw ConfigError("species '" + name + "': jitter fractions must be in [0, 0.5)");
  }
};

inline constexpr double kSynthPeak = 0.9;
inline constexpr double kSynthNoiseFloor = 0.003;
inline constexpr std::size_t kBandNoisePartials = 24;

/// Deterministic per (spec, seed). Output peak is exactly 0.9.
inline AudioClip synth_clip(const SpeciesSpec& spec, double duration_s, std::uint64_t seed, std::uint32_t sample_rate = kCanonicalRate) {
  spec.validate(sample_rate);
  if (!(duration_s > 0.0)) throw ConfigError("synthetic clip duration must be positive");
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  const double fs = sample_rate;
  const double carrier = spec.carrier_hz * (1.0 + spec.carrier_jitter * rng.uniform(-1.0, 1.0));
  const double rate = spec.pulse_rate_hz * (1.0 + spec.rate_jitter * rng.uniform(-1.0, 1.0));
  const double pulse_phase = rng.uniform();

  std::vector<double> freqs, phases;
  if (spec.noise_bandwidth_hz > 0.0) {
    for (std::size_t k = 0; k < kBandNoisePartials; ++k) {
      freqs.push_back(carrier + spec.noise_bandwidth_hz * (rng.uniform() - 0.5));
      phases.push_back(2.0 * M_PI * rng.uniform());
    }
  } else {
    freqs.push_back(carrier);
    phases.push_back(2.0 * M_PI * rng.uniform());
  }

  std::vector<double> x(n, 0.0);
  for (std::size_t k = 0; k < freqs.size(); ++k) {
    const double w = 2.0 * M_PI * freqs[k] / fs;
    for (std::size_t i = 0; i < n; ++i) x[i] += std::sin(w * static_cast<double>(i) + phases[k]);
  }
  if (spec.duty_cycle < 1.0) {
    for (std::size_t i = 0; i < n; ++i) {
      double ph = rate * static_cast<double>(i) / fs + pulse_phase;
      ph -= std::floor(ph);
      x[i] *= ph < spec.duty_cycle ? std::exp(-spec.decay * ph / spec.duty_cycle) : 0.0;
    }
  }
  double peak = 0.0;
  for (const double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : x) v /= peak;
  for (double& v : x) v += kSynthNoiseFloor * rng.normal();
  peak = 0.0;
  for (const double v : x) peak = std::max(peak, std::abs(v));

  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.species_label = spec.name;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) clip.samples[i] = static_cast<float>(x[i] * kSynthPeak / peak);
  clip.validate();
  return clip;
}

/// Class table spread over carrier and pulse-rate space. Classes come in
/// pairs that share a carrier (and its type) and differ in pulse rate, so
/// the pair members can only be told apart by temporal structure.
inline std::vector<SpeciesSpec> default_species(std::size_t n_classes) {
  if (n_classes < 2) throw ConfigError("synthetic corpus needs at least 2 classes");
  std::vector<SpeciesSpec> out;
  const std::size_t pairs = (n_classes + 1) / 2;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const std::size_t pair = c / 2;
    const double pos = pairs > 1 ? static_cast<double>(pair) / static_cast<double>(pairs - 1) : 0.0;
    SpeciesSpec s;
    char name[32];
    std::snprintf(name, sizeof(name), "species_%02zu", c);
    s.name = name;
    s.carrier_hz = 2500.0 * std::pow(16000.0 / 2500.0, pos);
    s.noise_bandwidth_hz = pair % 2 == 1 ? 0.25 * s.carrier_hz : 0.0;
    s.duty_cycle = 0.3 + 0.1 * static_cast<double>(pair % 4);
    s.decay = 1.5 * static_cast<double>(pair % 3);
    s.pulse_rate_hz = c % 2 == 0 ? 20.0 + 4.0 * static_cast<double>(pair % 3) : 60.0 + 6.0 * static_cast<double>(pair % 4);
    out.push_back(s);
  }
  return out;
}

struct SynthOptions {
  std::size_t n_classes = 8;
  std::size_t files_per_class = 4;
  double min_duration_s = 10.0;
  double max_duration_s = 12.0;
  std::uint64_t seed = 1234;
  std::uint32_t sample_rate = kCanonicalRate;

  void validate() const {
    if (n_classes < 2) throw ConfigError("synth n_classes must be at least 2");
    if (files_per_class == 0) throw ConfigError("synth files_per_class must be positive");
    if (!(min_duration_s > 0.0) || !(max_duration_s >= min_duration_s)) throw ConfigError("synth durations must satisfy 0 < min <= max");
  }
};

/// Writes `root/<species>/<species>_<k>.wav` (16-bit PCM) and
/// `root/manifest.csv`; returns the manifest.
inline DatasetManifest synth_dataset(const std::filesystem::path& root, const SynthOptions& opt, int jobs = 1) {
  opt.validate();
  const auto specs = default_species(opt.n_classes);
  const std::size_t total = specs.size() * opt.files_per_class;
  std::vector<ManifestEntry> entries(total);
  parallel_for(total, jobs, [&](std::size_t idx) {
    const auto& spec = specs[idx / opt.files_per_class];
    const std::size_t k = idx % opt.files_per_class;
    Rng pick(derive_seed(opt.seed, idx, 1));
    // Durations on a 10 ms grid so the sample count is exact.
    const double duration = std::round(pick.uniform(opt.min_duration_s, opt.max_duration_s) * 100.0) / 100.0;
    auto clip = synth_clip(spec, duration, derive_seed(opt.seed, idx, 2), opt.sample_rate);
    char file[64];
    std::snprintf(file, sizeof(file), "%s_%02zu.wav", spec.name.c_str(), k);
    const auto dir = root / spec.name;
    std::filesystem::create_directories(dir);
    write_wav(dir / file, clip.samples, opt.sample_rate, WavEncoding::kPcm16);
    entries[idx] = {(dir / file).string(), spec.name, duration, Split::kNone, spec.name + "/" + std::filesystem::path(file).stem().string()};
  });
  DatasetManifest manifest(std::move(entries));
  write_manifest(root / "manifest.csv", manifest);
  return manifest;
}

}  // namespace insectleaf
