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
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "insectleaf/error.hpp"

namespace insectleaf {

/// A bands x frames time-frequency representation, stored row-major
/// (values[band * frames + frame]).
template <typename T>
struct FeatureMapT {
  std::size_t bands = 0;
  std::size_t frames = 0;
  std::vector<T> values;
  std::vector<double> band_hz;      // centre frequency of each row
  double frame_seconds = 0.0;       // spacing of columns

  FeatureMapT() = default;
  FeatureMapT(std::size_t b, std::size_t f, T fill = T{}) : bands(b), frames(f), values(b * f, fill) {}

  T& at(std::size_t band, std::size_t frame) { return values[band * frames + frame]; }
  const T& at(std::size_t band, std::size_t frame) const { return values[band * frames + frame]; }
  std::span<T> row(std::size_t band) { return {values.data() + band * frames, frames}; }
  std::span<const T> row(std::size_t band) const { return {values.data() + band * frames, frames}; }

  bool all_finite() const {
    for (const auto& v : values)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

using FeatureMap = FeatureMapT<float>;

/// Debug export: a text header terminated by "end\n", then row-major
/// little-endian float32 values.
template <typename T>
void write_feature_map(const std::filesystem::path& path, const FeatureMapT<T>& fm) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write feature map: " + path.string());
  out << "insectleaf-featuremap 1\n";
  out << "shape " << fm.bands << ' ' << fm.frames << '\n';
  out << "frame_seconds " << fm.frame_seconds << '\n';
  out << "band_hz";
  for (double hz : fm.band_hz) out << ' ' << hz;
  out << "\nend\n";
  for (const auto& v : fm.values) {
    const float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), sizeof f);
  }
}

inline FeatureMap read_feature_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature map: " + path.string());
  std::string line, key;
  FeatureMap fm;
  if (!std::getline(in, line) || line != "insectleaf-featuremap 1") throw DataError("not a feature map file: " + path.string());
  while (std::getline(in, line) && line != "end") {
    std::istringstream ss(line);
    ss >> key;
    if (key == "shape") {
      ss >> fm.bands >> fm.frames;
    } else if (key == "frame_seconds") {
      ss >> fm.frame_seconds;
    } else if (key == "band_hz") {
      double hz;
      while (ss >> hz) fm.band_hz.push_back(hz);
    }
  }
  fm.values.resize(fm.bands * fm.frames);
  in.read(reinterpret_cast<char*>(fm.values.data()), static_cast<std::streamsize>(fm.values.size() * sizeof(float)));
  if (!in) throw DataError("truncated feature map: " + path.string());
  return fm;
}

}  // namespace insectleaf
