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

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "insectleaf/chunking.hpp"
#include "insectleaf/dataset.hpp"

namespace insectleaf::train {

/// Labelled fixed-length waveforms, addressed by index.
class ExampleSet {
 public:
  virtual ~ExampleSet() = default;
  virtual std::size_t size() const = 0;
  virtual std::size_t label(std::size_t i) const = 0;
  virtual std::vector<float> samples(std::size_t i) const = 0;
  /// Identifier of the recording an example was cut from.
  virtual std::string source(std::size_t i) const = 0;
};

class MemoryExamples final : public ExampleSet {
 public:
  void add(std::vector<float> x, std::size_t label, std::string source = {}) {
    x_.push_back(std::move(x));
    y_.push_back(label);
    src_.push_back(std::move(source));
  }
  std::size_t size() const override { return x_.size(); }
  std::size_t label(std::size_t i) const override { return y_.at(i); }
  std::vector<float> samples(std::size_t i) const override { return x_.at(i); }
  std::string source(std::size_t i) const override { return src_.at(i); }

 private:
  std::vector<std::vector<float>> x_;
  std::vector<std::size_t> y_;
  std::vector<std::string> src_;
};

/// Chunks of one split read lazily from a chunk store directory.
class ChunkStoreExamples final : public ExampleSet {
 public:
  ChunkStoreExamples(std::filesystem::path store_dir, const std::vector<ChunkIndexRow>& index, Split split) : dir_(std::move(store_dir)) {
    for (const auto& row : index)
      if (row.split == split) rows_.push_back(row);
  }
  std::size_t size() const override { return rows_.size(); }
  std::size_t label(std::size_t i) const override { return static_cast<std::size_t>(rows_.at(i).label_id); }
  std::vector<float> samples(std::size_t i) const override { return load_chunk(dir_, rows_.at(i)); }
  std::string source(std::size_t i) const override { return rows_.at(i).source_path; }

 private:
  std::filesystem::path dir_;
  std::vector<ChunkIndexRow> rows_;
};

}  // namespace insectleaf::train
