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
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "insectleaf/augment.hpp"
#include "insectleaf/chunking.hpp"
#include "insectleaf/dataset.hpp"
#include "insectleaf/error.hpp"
#include "insectleaf/leaf/params.hpp"
#include "insectleaf/log.hpp"
#include "insectleaf/mel.hpp"
#include "insectleaf/synth.hpp"
#include "insectleaf/train/model.hpp"
#include "insectleaf/train/trainer.hpp"

namespace insectleaf {

using Json = nlohmann::json;

/// Pipeline stages in dependency order. A stage's config hash covers its
/// own keys and those of every earlier stage.
enum class Stage { kSynth, kIngest, kSplit, kChunk, kAugment, kTrain };

inline std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::kSynth: return "synth";
    case Stage::kIngest: return "ingest";
    case Stage::kSplit: return "split";
    case Stage::kChunk: return "chunk";
    case Stage::kAugment: return "augment";
    case Stage::kTrain: return "train";
  }
  return "?";
}

/// Every setting of an experiment. Defaults reproduce the reference method
/// at synthetic scale.
struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::string data_root = "data/synth";
  std::string work_dir = "runs/default";
  std::string ir_dir;  // empty: built-in synthetic impulse responses

  SynthOptions synth;
  IngestRules ingest;
  SplitRatios split;
  ChunkParams chunk;
  AugmentPlan augment;
  MelConfig mel;
  leaf::LeafInit leaf;
  std::string leaf_init_name = "mel";
  std::string frontend = "both";  // mel, leaf or both
  double dropout = 0.4;
  train::TrainConfig train;

  /// Frontends selected by `frontend`.
  std::vector<train::FrontendKind> frontends() const {
    if (frontend == "both") return {train::FrontendKind::kMel, train::FrontendKind::kLeaf};
    return {train::parse_frontend(frontend)};
  }

  train::ModelConfig model_config(train::FrontendKind kind, std::size_t n_classes) const {
    train::ModelConfig m;
    m.frontend = kind;
    m.mel = mel;
    m.mel.chunk_samples = chunk.chunk_samples(kCanonicalRate);
    m.leaf_init = leaf;
    m.leaf_init.n_filters = mel.n_filters;
    m.leaf.chunk_samples = m.mel.chunk_samples;
    m.n_classes = n_classes;
    m.dropout = dropout;
    return m;
  }

  void validate() const {
    synth.validate();
    if (ingest.min_files_per_class < 3) throw ConfigError("min_files_per_class must be at least 3 (one file per split)");
    if (!(ingest.tail_seconds >= 0.0)) throw ConfigError("tail_seconds must be non-negative");
    if (!(split.train > 0.0) || !(split.val > 0.0) || !(split.test > 0.0) || std::abs(split.train + split.val + split.test - 1.0) > 1e-9)
      throw ConfigError("split ratios must be positive and sum to 1");
    chunk.validate();
    auto plan = augment;
    if (plan.ir_set.empty()) plan.ir_set.resize(1);
    plan.ir_set[0].sample_rate = kCanonicalRate;
    plan.validate();
    mel.validate();
    if (frontend != "both") train::parse_frontend(frontend);
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
    train.validate();
    if (data_root.empty() || work_dir.empty()) throw ConfigError("data_root and work_dir must be set");
    auto m = model_config(train::FrontendKind::kLeaf, 2);
    m.mel.validate();
    leaf::filter_layout(m.leaf_init);
  }
};

namespace detail {

struct ConfigField {
  const char* key;
  Stage stage;
  std::function<Json(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const Json&)> set;
};

template <typename V>
V json_as(const Json& j, const char* key) {
  try {
    if constexpr (std::is_same_v<V, bool>) {
      if (!j.is_boolean()) throw std::invalid_argument("boolean");
    } else if constexpr (std::is_integral_v<V>) {
      if (!j.is_number_integer()) throw std::invalid_argument("integer");
      if constexpr (std::is_unsigned_v<V>)
        if (j.get<long long>() < 0) throw std::invalid_argument("non-negative integer");
    } else if constexpr (std::is_floating_point_v<V>) {
      if (!j.is_number()) throw std::invalid_argument("number");
    } else {
      if (!j.is_string()) throw std::invalid_argument("string");
    }
    return j.get<V>();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config key '") + key + "' must be a " + e.what());
  }
}

#define INSECTLEAF_FIELD(KEY, STAGE, MEMBER)                                                             \
  ConfigField {                                                                                          \
    KEY, STAGE, [](const ExperimentConfig& c) { return Json(c.MEMBER); },                                \
        [](ExperimentConfig& c, const Json& j) { c.MEMBER = json_as<std::decay_t<decltype(c.MEMBER)>>(j, KEY); } \
  }

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields{
      INSECTLEAF_FIELD("seed", Stage::kSynth, seed),
      INSECTLEAF_FIELD("data_root", Stage::kSynth, data_root),
      INSECTLEAF_FIELD("work_dir", Stage::kSynth, work_dir),
      INSECTLEAF_FIELD("synth_classes", Stage::kSynth, synth.n_classes),
      INSECTLEAF_FIELD("synth_files_per_class", Stage::kSynth, synth.files_per_class),
      INSECTLEAF_FIELD("synth_min_duration_s", Stage::kSynth, synth.min_duration_s),
      INSECTLEAF_FIELD("synth_max_duration_s", Stage::kSynth, synth.max_duration_s),
      INSECTLEAF_FIELD("synth_seed", Stage::kSynth, synth.seed),
      INSECTLEAF_FIELD("min_files_per_class", Stage::kIngest, ingest.min_files_per_class),
      INSECTLEAF_FIELD("tail_seconds", Stage::kIngest, ingest.tail_seconds),
      INSECTLEAF_FIELD("split_train", Stage::kSplit, split.train),
      INSECTLEAF_FIELD("split_val", Stage::kSplit, split.val),
      INSECTLEAF_FIELD("split_test", Stage::kSplit, split.test),
      INSECTLEAF_FIELD("chunk_s", Stage::kChunk, chunk.chunk_s),
      INSECTLEAF_FIELD("hop_s", Stage::kChunk, chunk.hop_s),
      INSECTLEAF_FIELD("min_tail_s", Stage::kChunk, chunk.min_tail_s),
      INSECTLEAF_FIELD("drop_silent", Stage::kChunk, chunk.drop_silent),
      INSECTLEAF_FIELD("silence_floor_dbfs", Stage::kChunk, chunk.silence_floor_dbfs),
      INSECTLEAF_FIELD("ir_dir", Stage::kAugment, ir_dir),
      INSECTLEAF_FIELD("augment_generations", Stage::kAugment, augment.generations),
      INSECTLEAF_FIELD("mask_prob", Stage::kAugment, augment.mask_prob),
      INSECTLEAF_FIELD("mask_min_fraction", Stage::kAugment, augment.mask_min_fraction),
      INSECTLEAF_FIELD("mask_max_fraction", Stage::kAugment, augment.mask_max_fraction),
      INSECTLEAF_FIELD("snr_min_db", Stage::kAugment, augment.snr_min_db),
      INSECTLEAF_FIELD("snr_max_db", Stage::kAugment, augment.snr_max_db),
      INSECTLEAF_FIELD("ir_prob", Stage::kAugment, augment.ir_prob),
      INSECTLEAF_FIELD("ir_mix_min", Stage::kAugment, augment.mix_min),
      INSECTLEAF_FIELD("ir_mix_max", Stage::kAugment, augment.mix_max),
      INSECTLEAF_FIELD("frontend", Stage::kTrain, frontend),
      INSECTLEAF_FIELD("n_filters", Stage::kTrain, mel.n_filters),
      INSECTLEAF_FIELD("mel_fft_size", Stage::kTrain, mel.fft_size),
      INSECTLEAF_FIELD("mel_log_floor", Stage::kTrain, mel.log_floor),
      INSECTLEAF_FIELD("leaf_init", Stage::kTrain, leaf_init_name),
      INSECTLEAF_FIELD("leaf_pool_width", Stage::kTrain, leaf.pool_width),
      INSECTLEAF_FIELD("leaf_alpha", Stage::kTrain, leaf.alpha),
      INSECTLEAF_FIELD("leaf_delta", Stage::kTrain, leaf.delta),
      INSECTLEAF_FIELD("leaf_root", Stage::kTrain, leaf.root),
      INSECTLEAF_FIELD("leaf_smooth", Stage::kTrain, leaf.smooth),
      INSECTLEAF_FIELD("batch_size", Stage::kTrain, train.batch_size),
      INSECTLEAF_FIELD("max_epochs", Stage::kTrain, train.max_epochs),
      INSECTLEAF_FIELD("patience", Stage::kTrain, train.patience),
      INSECTLEAF_FIELD("learning_rate", Stage::kTrain, train.learning_rate),
      INSECTLEAF_FIELD("weight_decay", Stage::kTrain, train.weight_decay),
      INSECTLEAF_FIELD("dropout", Stage::kTrain, dropout),
      INSECTLEAF_FIELD("strict_improvement", Stage::kTrain, train.strict_improvement),
      INSECTLEAF_FIELD("runs", Stage::kTrain, train.runs),
  };
  return fields;
}

#undef INSECTLEAF_FIELD

}  // namespace detail

inline Json to_json(const ExperimentConfig& c) {
  Json j = Json::object();
  for (const auto& f : detail::config_fields()) j[f.key] = f.get(c);
  return j;
}

/// Applies the keys present in `j` over the defaults. Unknown keys and
/// wrongly typed values are errors.
inline ExperimentConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  for (const auto& [key, value] : j.items()) {
    const auto& fields = detail::config_fields();
    const auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return key == f.key; });
    if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(c, value);
  }
  c.leaf.scale = leaf::parse_init_scale(c.leaf_init_name);
  c.augment.seed = derive_seed(c.seed, 0x617567);
  c.train.seed = derive_seed(c.seed, 0x747261696e);
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

inline ExperimentConfig default_config() { return config_from_json(Json::object()); }

/// Hash of the settings a stage depends on (its own and all upstream keys).
inline std::uint64_t stage_hash(const ExperimentConfig& c, Stage s) {
  Json j = Json::object();
  for (const auto& f : detail::config_fields())
    if (f.stage <= s && std::string_view(f.key) != "work_dir") j[f.key] = f.get(c);
  return fnv1a(j.dump());
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// Stage receipts.

struct Receipt {
  std::string stage;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double duration_s = 0.0;
  Json extra = Json::object();
};

inline std::filesystem::path receipt_path(const std::filesystem::path& work_dir, std::string_view stage) {
  return work_dir / "receipts" / (std::string(stage) + ".json");
}

inline void write_receipt(const std::filesystem::path& work_dir, const Receipt& r) {
  const auto path = receipt_path(work_dir, r.stage);
  std::filesystem::create_directories(path.parent_path());
  Json j{{"stage", r.stage}, {"config_hash", hex64(r.config_hash)}, {"seed", r.seed}, {"inputs", r.inputs},
         {"outputs", r.outputs}, {"duration_s", r.duration_s}, {"extra", r.extra}};
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write receipt: " + path.string());
  os << j.dump(2) << '\n';
}

inline Receipt read_receipt(const std::filesystem::path& work_dir, std::string_view stage) {
  const auto path = receipt_path(work_dir, stage);
  std::ifstream in(path);
  if (!in) throw DataError("missing output of stage '" + std::string(stage) + "' (no " + path.string() + "); run `insectleaf " + std::string(stage) + "` first");
  try {
    const auto j = Json::parse(in);
    Receipt r;
    r.stage = j.at("stage").get<std::string>();
    r.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    r.seed = j.at("seed").get<std::uint64_t>();
    r.inputs = j.at("inputs").get<std::vector<std::string>>();
    r.outputs = j.at("outputs").get<std::vector<std::string>>();
    r.duration_s = j.at("duration_s").get<double>();
    r.extra = j.value("extra", Json::object());
    return r;
  } catch (const std::exception& e) {
    throw DataError("corrupt receipt " + path.string() + ": " + e.what());
  }
}

/// Verifies that an upstream stage ran with the current settings.
/// A hash mismatch is a config error unless `force` is set.
inline Receipt require_stage(const ExperimentConfig& c, Stage upstream, bool force) {
  const auto r = read_receipt(c.work_dir, stage_name(upstream));
  const auto expected = stage_hash(c, upstream);
  if (r.config_hash != expected) {
    const std::string msg = "stage '" + std::string(stage_name(upstream)) + "' outputs were produced with a different configuration (hash " +
                            hex64(r.config_hash) + ", expected " + hex64(expected) + ")";
    if (!force) throw ConfigError(msg + "; rerun it or pass --force");
    warn(msg + "; continuing because of --force");
  }
  return r;
}

}  // namespace insectleaf
