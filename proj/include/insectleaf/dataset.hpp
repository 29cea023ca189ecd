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
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "insectleaf/csv.hpp"
#include "insectleaf/error.hpp"
#include "insectleaf/log.hpp"
#include "insectleaf/resample.hpp"
#include "insectleaf/rng.hpp"
#include "insectleaf/wav.hpp"

namespace insectleaf {

inline constexpr std::uint32_t kCanonicalRate = 44100;

/// A labeled mono waveform.
struct AudioClip {
  std::vector<float> samples;
  std::uint32_t sample_rate = kCanonicalRate;
  std::string species_label;
  std::string source_id;

  double duration() const { return sample_rate ? static_cast<double>(samples.size()) / sample_rate : 0.0; }

  void validate() const {
    if (sample_rate == 0) throw DataError("clip '" + source_id + "': sample rate must be positive");
    for (float s : samples)
      if (!std::isfinite(s)) throw DataError("clip '" + source_id + "': non-finite sample");
  }
};

inline AudioClip resample(const AudioClip& clip, std::uint32_t target_hz) {
  AudioClip out;
  out.samples = resample(clip.samples, clip.sample_rate, target_hz);
  out.sample_rate = target_hz;
  out.species_label = clip.species_label;
  out.source_id = clip.source_id;
  return out;
}

enum class Split { kNone, kTrain, kVal, kTest };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    case Split::kNone: break;
  }
  return "none";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  if (s == "none" || s.empty()) return Split::kNone;
  throw DataError("unknown split tag '" + std::string(s) + "'");
}

struct ManifestEntry {
  std::string path;
  std::string species;
  double duration_s = 0.0;  // usable duration; shorter than the file when a tail rule applied
  Split split = Split::kNone;
  std::string source_id;
};

/// The list of usable recordings plus a dense class index. Class ids are the
/// rank of the species name in sorted order, so they are stable under reload.
class DatasetManifest {
 public:
  DatasetManifest() = default;
  explicit DatasetManifest(std::vector<ManifestEntry> entries) : entries_(std::move(entries)) { reindex(); }

  const std::vector<ManifestEntry>& entries() const noexcept { return entries_; }
  std::vector<ManifestEntry>& mutable_entries() noexcept { return entries_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  std::size_t num_classes() const noexcept { return class_names_.size(); }

  int class_id(std::string_view species) const {
    auto it = std::lower_bound(class_names_.begin(), class_names_.end(), species);
    if (it == class_names_.end() || *it != species) throw DataError("unknown species '" + std::string(species) + "'");
    return static_cast<int>(it - class_names_.begin());
  }

  std::size_t count(Split s) const {
    return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [s](const auto& e) { return e.split == s; }));
  }

  void reindex() {
    class_names_.clear();
    for (const auto& e : entries_) class_names_.push_back(e.species);
    std::sort(class_names_.begin(), class_names_.end());
    class_names_.erase(std::unique(class_names_.begin(), class_names_.end()), class_names_.end());
  }

 private:
  std::vector<ManifestEntry> entries_;
  std::vector<std::string> class_names_;
};

struct IngestRules {
  std::size_t min_files_per_class = 4;
  double tail_seconds = 0.0;  // > 0: keep only the last N seconds of each file
};

/// Scans root_dir/<species>/*.wav. Unreadable files are skipped with a
/// warning; species with too few usable files are dropped.
inline DatasetManifest ingest(const std::filesystem::path& root_dir, const IngestRules& rules = {}) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root_dir)) throw DataError("data root is not a directory: " + root_dir.string());
  std::vector<fs::path> species_dirs;
  for (const auto& d : fs::directory_iterator(root_dir))
    if (d.is_directory()) species_dirs.push_back(d.path());
  std::sort(species_dirs.begin(), species_dirs.end());

  std::vector<ManifestEntry> kept;
  for (const auto& dir : species_dirs) {
    const std::string species = dir.filename().string();
    std::vector<fs::path> files;
    for (const auto& f : fs::directory_iterator(dir)) {
      if (!f.is_regular_file()) continue;
      auto ext = f.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (ext == ".wav") files.push_back(f.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<ManifestEntry> usable;
    for (const auto& f : files) {
      try {
        const auto wav = read_wav(f);
        if (wav.samples.empty()) throw DataError("no samples in " + f.string());
        double duration = static_cast<double>(wav.samples.size()) / wav.sample_rate;
        if (rules.tail_seconds > 0.0) duration = std::min(duration, rules.tail_seconds);
        usable.push_back({f.string(), species, duration, Split::kNone, species + "/" + f.stem().string()});
      } catch (const DataError& e) {
        warn(std::string("skipping file: ") + e.what());
      }
    }
    if (usable.size() < rules.min_files_per_class) {
      warn("excluding species '" + species + "': " + std::to_string(usable.size()) + " usable files < " +
           std::to_string(rules.min_files_per_class));
      continue;
    }
    kept.insert(kept.end(), usable.begin(), usable.end());
  }
  if (kept.empty()) throw DataError("no species with at least " + std::to_string(rules.min_files_per_class) +
                                    " usable recordings under " + root_dir.string());
  return DatasetManifest(std::move(kept));
}

/// Loads a manifest entry at the canonical rate. When the manifest duration is
/// shorter than the file (tail rule), the last duration_s seconds are kept.
inline AudioClip load_entry(const ManifestEntry& entry, std::uint32_t target_hz = kCanonicalRate) {
  const auto wav = read_wav(entry.path);
  AudioClip clip;
  clip.samples = wav.samples;
  clip.sample_rate = wav.sample_rate;
  clip.species_label = entry.species;
  clip.source_id = entry.source_id;
  const auto keep = static_cast<std::size_t>(std::llround(entry.duration_s * wav.sample_rate));
  if (keep > 0 && keep + 1 < clip.samples.size())
    clip.samples.erase(clip.samples.begin(), clip.samples.end() - static_cast<std::ptrdiff_t>(keep));
  if (clip.sample_rate != target_hz) clip = resample(clip, target_hz);
  clip.validate();
  return clip;
}

struct SplitRatios {
  double train = 0.70;
  double val = 0.10;
  double test = 0.20;
};

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
};

/// Per-class split sizes: test and validation are rounded (half away from
/// zero) and floored at one file each; training takes the remainder.
inline SplitCounts split_counts(std::size_t n, const SplitRatios& ratios = {}) {
  if (n < 3) throw DataError("a class needs at least 3 files to appear in every split, got " + std::to_string(n));
  SplitCounts c;
  c.test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ratios.test * static_cast<double>(n))));
  c.val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ratios.val * static_cast<double>(n))));
  if (c.test + c.val >= n) throw DataError("split ratios leave no training file for a class of " + std::to_string(n));
  c.train = n - c.test - c.val;
  return c;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Assigns every entry to train/val/test, independently for each class.
/// Deterministic given the seed and independent of entry order.
inline DatasetManifest split_per_class(const DatasetManifest& manifest, const SplitRatios& ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 || std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split ratios must be non-negative and sum to 1");
  std::map<std::string, std::vector<ManifestEntry>> by_class;
  for (const auto& e : manifest.entries()) by_class[e.species].push_back(e);
  std::vector<ManifestEntry> out;
  for (auto& [species, entries] : by_class) {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
    const auto counts = split_counts(entries.size(), ratios);
    Rng rng(derive_seed(seed, fnv1a(species)));
    rng.shuffle(entries);
    for (std::size_t i = 0; i < entries.size(); ++i) {
      entries[i].split = i < counts.test ? Split::kTest : i < counts.test + counts.val ? Split::kVal : Split::kTrain;
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
    out.insert(out.end(), entries.begin(), entries.end());
  }
  return DatasetManifest(std::move(out));
}

inline const std::vector<std::string>& manifest_columns() {
  static const std::vector<std::string> cols{"path", "species", "duration_s", "split", "source_id"};
  return cols;
}

inline void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  CsvTable t;
  t.header = manifest_columns();
  for (const auto& e : manifest.entries())
    t.rows.push_back({e.path, e.species, fmt_num(e.duration_s), std::string(to_string(e.split)), e.source_id});
  write_csv(path, t);
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  const auto t = read_csv(path);
  const auto ip = t.column("path"), is = t.column("species"), id = t.column("duration_s"), isp = t.column("split"),
             isrc = t.column("source_id");
  std::vector<ManifestEntry> entries;
  for (const auto& r : t.rows)
    entries.push_back({r[ip], r[is], parse_double(r[id], "duration_s"), parse_split(r[isp]), r[isrc]});
  return DatasetManifest(std::move(entries));
}

}  // namespace insectleaf
