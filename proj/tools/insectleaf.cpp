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

// insectleaf: command-line driver for the insect sound classification
// pipeline. Run `insectleaf --help` for the subcommands.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "insectleaf.hpp"

namespace {

using namespace insectleaf;

struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  int jobs = 1;
  bool force = false;
  bool quiet = false;
};

/// Config file (if any) with `--set key=value` overrides applied. Values
/// are parsed as JSON and fall back to plain strings.
ExperimentConfig resolve_config(const GlobalOptions& g, std::string* verbatim) {
  Json j = Json::object();
  if (!g.config_path.empty()) {
    std::ifstream in(g.config_path);
    if (!in) throw ConfigError("cannot open config file: " + g.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    *verbatim = ss.str();
    try {
      j = Json::parse(*verbatim);
    } catch (const Json::parse_error& e) {
      throw ConfigError("invalid JSON in " + g.config_path + ": " + e.what());
    }
  }
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
    const auto key = kv.substr(0, eq), value = kv.substr(eq + 1);
    try {
      j[key] = Json::parse(value);
    } catch (const Json::parse_error&) {
      j[key] = value;
    }
  }
  return config_from_json(j);
}

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) return err->exit_code();
  return 2;
}

int write_features(const ExperimentConfig& c, const std::string& frontend, const std::string& input, const std::string& output, double offset_s) {
  AudioClip clip;
  {
    ManifestEntry e{input, "", 0.0, Split::kNone, input};
    clip = load_entry(e);
  }
  const auto len = c.chunk.chunk_samples(kCanonicalRate);
  const auto start = static_cast<std::size_t>(std::llround(offset_s * kCanonicalRate));
  if (start >= clip.samples.size()) throw DataError("offset lies beyond the end of " + input);
  const auto x = read_wrapped(clip.samples, start, len);
  const auto mc = c.model_config(train::parse_frontend(frontend), 2);
  train::Model<float> model(mc, 0);
  write_feature_map(output, model.features(x));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"insectleaf: insect sound classification with fixed mel and learnable LEAF frontends"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("-c,--config", g.config_path, "Experiment config (flat JSON object); defaults apply to missing keys");
  app.add_option("--set", g.overrides, "Override one config key, e.g. --set max_epochs=30 (repeatable)");
  app.add_option("-j,--jobs", g.jobs, "Worker threads inside a stage (results do not depend on it)")->check(CLI::PositiveNumber);
  app.add_flag("--force", g.force, "Proceed even when upstream outputs were produced with a different config");
  app.add_flag("-q,--quiet", g.quiet, "Only print errors and warnings");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic corpus under data_root");
  auto* ingest_cmd = app.add_subcommand("ingest", "Scan data_root/<species>/*.wav into a manifest");
  auto* split = app.add_subcommand("split", "Assign recordings to train/val/test per species");
  auto* chunk_cmd = app.add_subcommand("chunk", "Cut recordings into fixed-length overlapping chunks");
  auto* augment = app.add_subcommand("augment", "Create augmented copies of the training chunks");
  auto* train_cmd = app.add_subcommand("train", "Train the classifier(s) with early stopping");
  std::string train_frontend;
  train_cmd->add_option("--frontend", train_frontend, "mel, leaf or both (overrides the config)")->check(CLI::IsMember({"mel", "leaf", "both"}));
  auto* evaluate = app.add_subcommand("evaluate", "Score the selected checkpoints on the test split");
  auto* analyze = app.add_subcommand("analyze-filters", "Filter drift report for the trained LEAF frontend");
  auto* all = app.add_subcommand("all", "ingest, split, chunk, augment, train, evaluate and analyze-filters");
  auto* features = app.add_subcommand("features", "Export one chunk's feature map (text header + float32 values)");
  std::string feat_frontend = "mel", feat_in, feat_out;
  double feat_offset = 0.0;
  features->add_option("--frontend", feat_frontend, "mel or leaf (LEAF at its initialisation)")->check(CLI::IsMember({"mel", "leaf"}));
  features->add_option("-i,--input", feat_in, "WAV file")->required();
  features->add_option("-o,--output", feat_out, "Output path")->required();
  features->add_option("--offset", feat_offset, "Chunk start in seconds")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (!train_frontend.empty()) g.overrides.push_back("frontend=" + train_frontend);
    std::string verbatim;
    const auto cfg = resolve_config(g, &verbatim);
    pipeline::StageOptions o;
    o.jobs = g.jobs;
    o.force = g.force;
    o.console = g.quiet ? nullptr : &std::cout;
    if (!features->parsed()) pipeline::persist_config(cfg, verbatim);

    if (synth->parsed()) pipeline::run_synth(cfg, o);
    else if (ingest_cmd->parsed()) pipeline::run_ingest(cfg, o);
    else if (split->parsed()) pipeline::run_split(cfg, o);
    else if (chunk_cmd->parsed()) pipeline::run_chunk(cfg, o);
    else if (augment->parsed()) pipeline::run_augment(cfg, o);
    else if (train_cmd->parsed()) pipeline::run_train(cfg, o);
    else if (evaluate->parsed()) pipeline::run_evaluate(cfg, o);
    else if (analyze->parsed()) pipeline::run_analyze_filters(cfg, o);
    else if (all->parsed()) pipeline::run_all(cfg, o);
    else if (features->parsed()) return write_features(cfg, feat_frontend, feat_in, feat_out, feat_offset);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}
