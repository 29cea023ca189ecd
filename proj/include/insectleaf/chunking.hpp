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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "insectleaf/csv.hpp"
#include "insectleaf/dataset.hpp"
#include "insectleaf/error.hpp"
#include "insectleaf/wav.hpp"

namespace insectleaf {

struct ChunkParams {
  double chunk_s = 5.0;
  double hop_s = 1.25;
  double min_tail_s = 1.25;
  /// Chunks quieter than this RMS level (dBFS) are dropped; disabled when
  /// drop_silent is false.
  bool drop_silent = false;
  double silence_floor_dbfs = -60.0;

  std::size_t chunk_samples(std::uint32_t rate) const { return static_cast<std::size_t>(std::llround(chunk_s * rate)); }
  std::size_t hop_samples(std::uint32_t rate) const { return static_cast<std::size_t>(std::llround(hop_s * rate)); }
  std::size_t min_tail_samples(std::uint32_t rate) const { return static_cast<std::size_t>(std::llround(min_tail_s * rate)); }

  void validate() const {
    if (!(chunk_s > 0) || !(hop_s > 0) || !(min_tail_s > 0)) throw ConfigError("chunk, hop and tail lengths must be positive");
    if (min_tail_s > chunk_s) throw ConfigError("minimum tail cannot exceed the chunk length");
  }
};

/// Where a chunk came from. `aug_gen` is 0 for original material and the
/// generation number (1-based) for augmented copies.
struct ChunkLineage {
  std::string source_path;
  std::string source_id;
  std::size_t start_sample = 0;
  double start_s = 0.0;
  bool wrapped = false;
  int aug_gen = 0;
};

struct ChunkRecord {
  std::vector<float> samples;
  int label_id = 0;
  std::string species;
  Split split = Split::kNone;
  ChunkLineage lineage;
};

/// Window start offsets (in samples) for a clip of n samples.
inline std::vector<std::size_t> chunk_starts(std::size_t n, std::uint32_t rate, const ChunkParams& p = {}) {
  if (n == 0) throw DataError("cannot chunk an empty clip");
  const std::size_t len = p.chunk_samples(rate);
  if (n < len) return {0};
  const std::size_t hop = p.hop_samples(rate), tail = p.min_tail_samples(rate);
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; n - s >= tail; s += hop) {
    starts.push_back(s);
    if (s + hop > n) break;
  }
  return starts;
}

/// Reads `len` samples starting at `start`, continuing from offset 0 whenever
/// the end of the clip is reached. Short clips are thereby looped.
inline std::vector<float> read_wrapped(std::span<const float> clip, std::size_t start, std::size_t len) {
  std::vector<float> out(len);
  const std::size_t n = clip.size();
  std::size_t pos = start % n;
  for (std::size_t i = 0; i < len; ++i) {
    out[i] = clip[pos];
    if (++pos == n) pos = 0;
  }
  return out;
}

inline double rms_dbfs(std::span<const float> x) {
  double acc = 0.0;
  for (float v : x) acc += static_cast<double>(v) * v;
  const double rms = x.empty() ? 0.0 : std::sqrt(acc / x.size());
  return rms > 0 ? 20.0 * std::log10(rms) : -std::numeric_limits<double>::infinity();
}

/// Slices a clip at the canonical rate into fixed-length overlapping chunks.
inline std::vector<ChunkRecord> chunk(const AudioClip& clip, const ChunkParams& p = {}, int label_id = 0,
                                      const std::string& source_path = {}) {
  p.validate();
  if (clip.samples.empty()) throw DataError("cannot chunk an empty clip: " + clip.source_id);
  const std::size_t len = p.chunk_samples(clip.sample_rate);
  std::vector<ChunkRecord> out;
  for (std::size_t start : chunk_starts(clip.samples.size(), clip.sample_rate, p)) {
    ChunkRecord rec;
    rec.samples = read_wrapped(clip.samples, start, len);
    if (p.drop_silent && rms_dbfs(rec.samples) < p.silence_floor_dbfs) continue;
    rec.label_id = label_id;
    rec.species = clip.species_label;
    rec.lineage.source_path = source_path;
    rec.lineage.source_id = clip.source_id;
    rec.lineage.start_sample = start;
    rec.lineage.start_s = static_cast<double>(start) / clip.sample_rate;
    rec.lineage.wrapped = start + len > clip.samples.size();
    out.push_back(std::move(rec));
  }
  return out;
}

/// Rebuilds an original chunk's samples from its lineage and the source clip.
inline std::vector<float> reconstruct_chunk(const AudioClip& clip, const ChunkLineage& lineage, const ChunkParams& p = {}) {
  return read_wrapped(clip.samples, lineage.start_sample, p.chunk_samples(clip.sample_rate));
}

// ---------------------------------------------------------------------------
// Chunk store: 32-bit float WAV files plus index.csv.

struct ChunkIndexRow {
  std::string chunk_path;  // relative to the store directory
  int label_id = 0;
  std::string species;
  Split split = Split::kNone;
  std::string source_path;
  double start_s = 0.0;
  bool wrapped = false;
  int aug_gen = 0;
};

inline const std::vector<std::string>& chunk_index_columns() {
  static const std::vector<std::string> cols{"chunk_path", "label_id", "species", "split",
                                             "source_path", "start_s", "wrapped", "aug_gen"};
  return cols;
}

inline std::string aug_gen_tag(int gen) { return gen == 0 ? "original" : std::to_string(gen); }

inline void write_chunk_index(const std::filesystem::path& path, const std::vector<ChunkIndexRow>& rows) {
  CsvTable t;
  t.header = chunk_index_columns();
  for (const auto& r : rows)
    t.rows.push_back({r.chunk_path, std::to_string(r.label_id), r.species, std::string(to_string(r.split)), r.source_path,
                      fmt_num(r.start_s), r.wrapped ? "1" : "0", aug_gen_tag(r.aug_gen)});
  write_csv(path, t);
}

inline std::vector<ChunkIndexRow> read_chunk_index(const std::filesystem::path& path) {
  const auto t = read_csv(path);
  std::vector<std::size_t> col;
  for (const auto& name : chunk_index_columns()) col.push_back(t.column(name));
  std::vector<ChunkIndexRow> rows;
  for (const auto& r : t.rows) {
    ChunkIndexRow row;
    row.chunk_path = r[col[0]];
    row.label_id = static_cast<int>(parse_int(r[col[1]], "label_id"));
    row.species = r[col[2]];
    row.split = parse_split(r[col[3]]);
    row.source_path = r[col[4]];
    row.start_s = parse_double(r[col[5]], "start_s");
    row.wrapped = r[col[6]] == "1";
    row.aug_gen = r[col[7]] == "original" ? 0 : static_cast<int>(parse_int(r[col[7]], "aug_gen"));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<float> load_chunk(const std::filesystem::path& store_dir, const ChunkIndexRow& row) {
  return read_wav(store_dir / row.chunk_path).samples;
}

}  // namespace insectleaf
