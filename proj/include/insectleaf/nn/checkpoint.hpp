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

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "insectleaf/error.hpp"

namespace insectleaf::nn {

/// Binary checkpoint layout (little-endian):
///   "ILCKPT\0\0"            8-byte magic
///   u32 version (1)
///   u64 config hash
///   u32 epoch
///   f64 validation loss
///   u32 tensor count, then per tensor:
///     u32 name length, name bytes, u64 element count, f64 values
/// Values are stored as f64 so float and double models round-trip exactly.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t config_hash = 0;
  std::uint32_t epoch = 0;
  double val_loss = 0.0;
  std::map<std::string, std::vector<double>> tensors;

  template <typename V>
  void put(const std::string& name, const V& v) {
    tensors[name] = std::vector<double>(v.begin(), v.end());
  }

  template <typename V>
  void get(const std::string& name, V& v) const {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("checkpoint has no tensor '" + name + "'");
    if (it->second.size() != v.size())
      throw DataError("checkpoint tensor '" + name + "' has " + std::to_string(it->second.size()) + " values, expected " + std::to_string(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<typename V::value_type>(it->second[i]);
  }
};

namespace detail {
inline constexpr char kCheckpointMagic[8] = {'I', 'L', 'C', 'K', 'P', 'T', 0, 0};

template <typename V>
void put_raw(std::ostream& os, const V& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}
template <typename V>
V get_raw(std::istream& is, const std::filesystem::path& path) {
  V v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(V))) throw DataError("truncated checkpoint: " + path.string());
  return v;
}
}  // namespace detail

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write checkpoint: " + path.string());
    os.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
    detail::put_raw(os, Checkpoint::kVersion);
    detail::put_raw(os, ck.config_hash);
    detail::put_raw(os, ck.epoch);
    detail::put_raw(os, ck.val_loss);
    detail::put_raw(os, static_cast<std::uint32_t>(ck.tensors.size()));
    for (const auto& [name, values] : ck.tensors) {
      detail::put_raw(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      detail::put_raw(os, static_cast<std::uint64_t>(values.size()));
      os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    }
    if (!os) throw DataError("failed writing checkpoint: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0) throw DataError("not a checkpoint file: " + path.string());
  const auto version = detail::get_raw<std::uint32_t>(is, path);
  if (version != Checkpoint::kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path.string());
  Checkpoint ck;
  ck.config_hash = detail::get_raw<std::uint64_t>(is, path);
  ck.epoch = detail::get_raw<std::uint32_t>(is, path);
  ck.val_loss = detail::get_raw<double>(is, path);
  const auto count = detail::get_raw<std::uint32_t>(is, path);
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto len = detail::get_raw<std::uint32_t>(is, path);
    if (len > 4096) throw DataError("corrupt checkpoint tensor name: " + path.string());
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw DataError("truncated checkpoint: " + path.string());
    const auto n = detail::get_raw<std::uint64_t>(is, path);
    if (n > (std::uint64_t{1} << 32)) throw DataError("corrupt checkpoint tensor size: " + path.string());
    std::vector<double> values(n);
    if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)))) throw DataError("truncated checkpoint: " + path.string());
    ck.tensors.emplace(std::move(name), std::move(values));
  }
  return ck;
}

}  // namespace insectleaf::nn
