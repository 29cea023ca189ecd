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

// Minimal RIFF/WAVE reader and writer: PCM 16/24/32-bit integer and 32-bit
// IEEE float, any channel count (mixed down to mono by channel average).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "insectleaf/error.hpp"

namespace insectleaf {

struct WavAudio {
  std::vector<float> samples;  // mono
  std::uint32_t sample_rate = 0;
  std::uint16_t channels = 0;
  std::uint16_t bits_per_sample = 0;
  bool is_float = false;
};

namespace detail {

inline std::uint32_t read_le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t read_le16(const unsigned char* p) { return std::uint16_t(p[0] | (p[1] << 8)); }

inline void put_le32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_le16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

inline WavAudio read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open audio file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto fail = [&](const std::string& why) { return DataError("invalid WAV '" + path.string() + "': " + why); };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw fail("missing RIFF/WAVE header");

  WavAudio wav;
  std::uint16_t format = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = detail::read_le32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || avail < 16) throw fail("short fmt chunk");
      const unsigned char* f = bytes.data() + body;
      format = detail::read_le16(f);
      wav.channels = detail::read_le16(f + 2);
      wav.sample_rate = detail::read_le32(f + 4);
      wav.bits_per_sample = detail::read_le16(f + 14);
      if (format == 0xFFFE) {
        if (size < 40 || avail < 40) throw fail("short extensible fmt chunk");
        format = detail::read_le16(f + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = std::min<std::size_t>(size, avail);
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw fail("no fmt chunk");
  if (!data) throw fail("no data chunk");
  if (wav.channels == 0) throw fail("zero channels");
  if (wav.sample_rate == 0) throw fail("zero sample rate");

  wav.is_float = format == 3;
  if (format != 1 && format != 3) throw fail("unsupported sample format " + std::to_string(format));
  if (wav.is_float && wav.bits_per_sample != 32) throw fail("only 32-bit float is supported");
  if (!wav.is_float && wav.bits_per_sample != 16 && wav.bits_per_sample != 24 && wav.bits_per_sample != 32)
    throw fail("unsupported PCM bit depth " + std::to_string(wav.bits_per_sample));

  const std::size_t bytes_per_sample = wav.bits_per_sample / 8;
  const std::size_t frame_bytes = bytes_per_sample * wav.channels;
  const std::size_t frames = data_size / frame_bytes;
  wav.samples.assign(frames, 0.0f);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < wav.channels; ++c) {
      const unsigned char* s = data + i * frame_bytes + c * bytes_per_sample;
      double v = 0.0;
      if (wav.is_float) {
        float f;
        std::uint32_t bits = detail::read_le32(s);
        std::memcpy(&f, &bits, 4);
        v = f;
      } else if (bytes_per_sample == 2) {
        v = static_cast<std::int16_t>(detail::read_le16(s)) / 32768.0;
      } else if (bytes_per_sample == 3) {
        std::int32_t x = std::int32_t(s[0]) | (std::int32_t(s[1]) << 8) | (std::int32_t(s[2]) << 16);
        if (x & 0x800000) x -= 0x1000000;
        v = x / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(detail::read_le32(s)) / 2147483648.0;
      }
      acc += v;
    }
    const float mono = static_cast<float>(acc / wav.channels);
    if (!std::isfinite(mono)) throw fail("non-finite sample at frame " + std::to_string(i));
    wav.samples[i] = mono;
  }
  return wav;
}

enum class WavEncoding { kFloat32, kPcm16 };

inline void write_wav(const std::filesystem::path& path, std::span<const float> samples, std::uint32_t sample_rate,
                      WavEncoding encoding = WavEncoding::kFloat32) {
  const bool is_float = encoding == WavEncoding::kFloat32;
  const std::uint16_t bits = is_float ? 32 : 16;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * (bits / 8));
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::put_le32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_le32(out, 16);
  detail::put_le16(out, is_float ? 3 : 1);
  detail::put_le16(out, 1);
  detail::put_le32(out, sample_rate);
  detail::put_le32(out, sample_rate * (bits / 8));
  detail::put_le16(out, bits / 8);
  detail::put_le16(out, bits);
  out += "data";
  detail::put_le32(out, data_bytes);
  for (float s : samples) {
    if (is_float) {
      std::uint32_t v;
      std::memcpy(&v, &s, 4);
      detail::put_le32(out, v);
    } else {
      const double clipped = std::clamp(static_cast<double>(s), -1.0, 32767.0 / 32768.0);
      detail::put_le16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clipped * 32768.0))));
    }
  }
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw DataError("cannot write audio file: " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace insectleaf
