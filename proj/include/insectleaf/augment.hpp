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
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "insectleaf/chunking.hpp"
#include "insectleaf/dataset.hpp"
#include "insectleaf/error.hpp"
#include "insectleaf/fft.hpp"
#include "insectleaf/log.hpp"
#include "insectleaf/parallel.hpp"
#include "insectleaf/rng.hpp"
#include "insectleaf/wav.hpp"

namespace insectleaf {

struct ImpulseResponse {
  std::vector<float> samples;
  std::uint32_t sample_rate = kCanonicalRate;
  std::string location_tag;
  std::string id;
};

/// Parameters of the stochastic training-set expansion. Band widths are
/// fractions of the Nyquist frequency; SNRs are in dB.
struct AugmentPlan {
  int generations = 10;
  double mask_prob = 0.5;
  double mask_min_fraction = 0.06;
  double mask_max_fraction = 0.22;
  double snr_min_db = 25.0;
  double snr_max_db = 80.0;
  double ir_prob = 0.7;
  double mix_min = 0.0;
  double mix_max = 1.0;
  std::vector<ImpulseResponse> ir_set;
  std::uint64_t seed = 0;

  void validate() const {
    const auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (generations < 0) throw ConfigError("augmentation generations must be >= 0");
    if (!prob(mask_prob) || !prob(ir_prob)) throw ConfigError("augmentation probabilities must lie in [0, 1]");
    if (!(mask_min_fraction > 0.0) || !(mask_max_fraction < 1.0) || mask_min_fraction > mask_max_fraction)
      throw ConfigError("mask band range must satisfy 0 < min <= max < 1");
    if (snr_min_db > snr_max_db) throw ConfigError("SNR range must be ordered");
    if (!(mix_min >= 0.0) || !(mix_max <= 1.0) || mix_min > mix_max) throw ConfigError("IR mix range must lie in [0, 1]");
    if (ir_prob > 0.0 && ir_set.empty()) throw ConfigError("ir_prob > 0 requires at least one impulse response");
    for (const auto& ir : ir_set) {
      if (ir.sample_rate != kCanonicalRate) throw ConfigError("impulse response '" + ir.id + "' is not at the canonical rate");
    }
  }
};

/// Every random decision taken for one augmented record.
struct AugmentDraw {
  bool mask = false;
  double mask_center_hz = 0.0;
  double mask_fraction = 0.0;
  double snr_db = 0.0;
  int ir_index = -1;  // -1: no impulse response applied
  double mix = 0.0;
  std::uint64_t noise_seed = 0;
};

// ---------------------------------------------------------------------------
// Individual treatments.

/// Removes a band of width band_fraction * Nyquist centred on center_hz by
/// zeroing the corresponding bins of a DFT spanning the whole chunk.
inline std::vector<float> frequency_mask(std::span<const float> chunk, std::uint32_t sample_rate, double center_hz,
                                         double band_fraction) {
  if (!(band_fraction > 0.0 && band_fraction < 1.0)) throw DataError("frequency_mask: band fraction must lie in (0, 1)");
  const double nyquist = sample_rate / 2.0;
  const double half = 0.5 * band_fraction * nyquist;
  const double lo = center_hz - half, hi = center_hz + half;
  if (hi <= 0.0 || lo >= nyquist) throw DataError("frequency_mask: band lies outside the spectrum");
  const std::size_t n = chunk.size();
  if (n == 0) return {};
  RealFft<double> fft(n);
  for (std::size_t i = 0; i < n; ++i) fft.signal()[i] = chunk[i];
  fft.forward();
  const double bin_hz = static_cast<double>(sample_rate) / n;
  for (std::size_t k = 0; k < fft.bins(); ++k) {
    const double f = k * bin_hz;
    if (f >= lo && f <= hi) fft.spectrum()[k] = 0.0;
  }
  fft.backward();
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(fft.signal()[i] / n);
  return out;
}

inline double mean_power(std::span<const float> x) {
  double acc = 0.0;
  for (float v : x) acc += static_cast<double>(v) * v;
  return x.empty() ? 0.0 : acc / x.size();
}

/// Adds white Gaussian noise at exactly snr_db relative to the chunk's mean
/// power. If the sum would leave [-1, 1] the whole output is scaled down,
/// which leaves the SNR untouched.
inline std::vector<float> add_noise_snr(std::span<const float> chunk, double snr_db, Rng& rng) {
  const double signal_power = mean_power(chunk);
  if (!(signal_power > 0.0)) {
    warn("add_noise_snr: silent chunk left unchanged (SNR undefined)");
    return {chunk.begin(), chunk.end()};
  }
  std::vector<double> noise(chunk.size());
  double noise_power = 0.0;
  for (auto& v : noise) {
    v = rng.normal();
    noise_power += v * v;
  }
  noise_power /= static_cast<double>(noise.size());
  const double scale = std::sqrt(signal_power / std::pow(10.0, snr_db / 10.0) / noise_power);
  std::vector<double> mixed(chunk.size());
  double peak = 0.0;
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    mixed[i] = chunk[i] + scale * noise[i];
    peak = std::max(peak, std::abs(mixed[i]));
  }
  const double gain = peak > 1.0 ? 1.0 / peak : 1.0;
  std::vector<float> out(chunk.size());
  for (std::size_t i = 0; i < chunk.size(); ++i) out[i] = static_cast<float>(mixed[i] * gain);
  return out;
}

/// Dry/wet blend with a reverberated copy. The wet signal is the linear
/// convolution truncated to the chunk length, RMS-matched to the dry chunk.
inline std::vector<float> convolve_ir(std::span<const float> chunk, const ImpulseResponse& ir, double mix) {
  if (!(mix >= 0.0 && mix <= 1.0)) throw DataError("convolve_ir: mix must lie in [0, 1]");
  if (mean_power(ir.samples) <= 0.0) throw DataError("convolve_ir: impulse response '" + ir.id + "' is all zeros");
  if (mix == 0.0) return {chunk.begin(), chunk.end()};
  auto wet = fft_convolve<float>(chunk, ir.samples);
  wet.resize(chunk.size());
  const double dry_power = mean_power(chunk), wet_power = mean_power(wet);
  const double gain = wet_power > 0.0 ? std::sqrt(dry_power / wet_power) : 0.0;
  std::vector<float> out(chunk.size());
  for (std::size_t i = 0; i < chunk.size(); ++i)
    out[i] = static_cast<float>((1.0 - mix) * chunk[i] + mix * gain * wet[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Composite pipeline.

/// Draws the random decisions for one (chunk, generation) job. All values are
/// drawn in a fixed order whether or not a treatment is applied, so a change
/// in one probability does not shift the other streams.
inline AugmentDraw draw_augmentation(const AugmentPlan& plan, std::uint64_t sub_seed, std::uint32_t sample_rate = kCanonicalRate) {
  Rng rng(sub_seed);
  AugmentDraw d;
  const double nyquist = sample_rate / 2.0;
  d.mask = rng.bernoulli(plan.mask_prob);
  d.mask_fraction = rng.uniform(plan.mask_min_fraction, plan.mask_max_fraction);
  const double half = 0.5 * d.mask_fraction * nyquist;
  d.mask_center_hz = rng.uniform(half, nyquist - half);
  d.snr_db = rng.uniform(plan.snr_min_db, plan.snr_max_db);
  const bool use_ir = rng.bernoulli(plan.ir_prob);
  const auto ir_pick = rng.below(std::max<std::size_t>(plan.ir_set.size(), 1));
  d.ir_index = use_ir && !plan.ir_set.empty() ? static_cast<int>(ir_pick) : -1;
  d.mix = rng.uniform(plan.mix_min, plan.mix_max);
  d.noise_seed = rng.next_u64();
  if (!d.mask) d.mask_center_hz = d.mask_fraction = 0.0;
  if (d.ir_index < 0) d.mix = 0.0;
  return d;
}

/// mask (optional) -> noise (always) -> impulse response (optional).
inline std::vector<float> apply_augmentation(std::span<const float> chunk, const AugmentDraw& draw, const AugmentPlan& plan,
                                             std::uint32_t sample_rate = kCanonicalRate) {
  std::vector<float> x(chunk.begin(), chunk.end());
  if (draw.mask) x = frequency_mask(x, sample_rate, draw.mask_center_hz, draw.mask_fraction);
  Rng noise_rng(draw.noise_seed);
  x = add_noise_snr(x, draw.snr_db, noise_rng);
  if (draw.ir_index >= 0) x = convolve_ir(x, plan.ir_set.at(static_cast<std::size_t>(draw.ir_index)), draw.mix);
  return x;
}

/// Sub-seed of one job, derived from the chunk's identity (not its position).
inline std::uint64_t augment_sub_seed(const AugmentPlan& plan, const std::string& chunk_key, int generation) {
  return derive_seed(plan.seed, fnv1a(chunk_key), static_cast<std::uint64_t>(generation));
}

inline std::string chunk_key(const ChunkLineage& l) {
  return l.source_id + "@" + std::to_string(l.start_sample);
}

struct AugmentLineage {
  std::size_t parent = 0;  // index of the original record
  int generation = 0;
  std::uint64_t sub_seed = 0;
  AugmentDraw draw;
};

struct AugmentedCorpus {
  std::vector<ChunkRecord> records;      // originals first, then generation-major copies
  std::vector<AugmentLineage> lineage;   // one entry per augmented record, aligned with records[originals..]
};

/// One augmented copy of a training chunk for the given generation (>= 1).
inline std::pair<ChunkRecord, AugmentLineage> augment_record(const ChunkRecord& src, std::size_t parent, const AugmentPlan& plan, int generation) {
  if (src.split != Split::kTrain) throw DataError("augmentation accepts training chunks only (" + src.lineage.source_id + ")");
  AugmentLineage lin;
  lin.parent = parent;
  lin.generation = generation;
  lin.sub_seed = augment_sub_seed(plan, chunk_key(src.lineage), generation);
  lin.draw = draw_augmentation(plan, lin.sub_seed);
  ChunkRecord rec;
  rec.samples = apply_augmentation(src.samples, lin.draw, plan);
  rec.label_id = src.label_id;
  rec.species = src.species;
  rec.split = src.split;
  rec.lineage = src.lineage;
  rec.lineage.aug_gen = generation;
  return {std::move(rec), lin};
}

inline AugmentedCorpus augment_training_set(const std::vector<ChunkRecord>& originals, const AugmentPlan& plan, int jobs = 1) {
  plan.validate();
  for (const auto& r : originals)
    if (r.split != Split::kTrain) throw DataError("augmentation accepts training chunks only (" + r.lineage.source_id + ")");
  AugmentedCorpus out;
  const std::size_t n = originals.size();
  const std::size_t total = n * static_cast<std::size_t>(plan.generations);
  out.records.resize(n + total);
  out.lineage.resize(total);
  std::copy(originals.begin(), originals.end(), out.records.begin());
  parallel_for(total, jobs, [&](std::size_t job) {
    const std::size_t parent = job % n;
    auto [rec, lin] = augment_record(originals[parent], parent, plan, static_cast<int>(job / n) + 1);
    out.records[n + job] = std::move(rec);
    out.lineage[job] = lin;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Impulse responses.

/// Three exponentially decaying noise bursts with distinct decay times,
/// standing in for recorded outdoor responses.
inline std::vector<ImpulseResponse> synthetic_impulse_responses(std::uint64_t seed = 7) {
  const double decays[] = {0.03, 0.08, 0.2};  // seconds to fall by 1/e
  const char* tags[] = {"synthetic-open", "synthetic-forest", "synthetic-dense"};
  std::vector<ImpulseResponse> out;
  for (int k = 0; k < 3; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    ImpulseResponse ir;
    ir.id = "synth" + std::to_string(k);
    ir.location_tag = tags[k];
    const auto len = static_cast<std::size_t>(5.0 * decays[k] * kCanonicalRate);
    ir.samples.resize(len);
    for (std::size_t i = 0; i < len; ++i)
      ir.samples[i] = static_cast<float>(rng.normal() * std::exp(-static_cast<double>(i) / (decays[k] * kCanonicalRate)));
    ir.samples[0] = 1.0f;
    out.push_back(std::move(ir));
  }
  return out;
}

/// Loads every WAV in a directory (sorted by name), resampled to 44.1 kHz.
/// The location tag is the file stem's prefix before the first '_'.
inline std::vector<ImpulseResponse> load_impulse_responses(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("impulse response directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& f : fs::directory_iterator(dir))
    if (f.is_regular_file() && f.path().extension() == ".wav") files.push_back(f.path());
  std::sort(files.begin(), files.end());
  std::vector<ImpulseResponse> out;
  for (const auto& f : files) {
    auto wav = read_wav(f);
    ImpulseResponse ir;
    ir.samples = wav.sample_rate == kCanonicalRate ? wav.samples : resample(wav.samples, wav.sample_rate, kCanonicalRate);
    ir.id = f.stem().string();
    ir.location_tag = ir.id.substr(0, ir.id.find('_'));
    if (mean_power(ir.samples) <= 0.0) throw DataError("impulse response has no energy: " + f.string());
    out.push_back(std::move(ir));
  }
  if (out.empty()) throw DataError("no impulse responses in " + dir.string());
  return out;
}

}  // namespace insectleaf
