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

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <ostream>
#include <string>
#include <vector>

#include "insectleaf/augment.hpp"
#include "insectleaf/chunking.hpp"
#include "insectleaf/config.hpp"
#include "insectleaf/csv.hpp"
#include "insectleaf/dataset.hpp"
#include "insectleaf/eval/drift.hpp"
#include "insectleaf/eval/metrics.hpp"
#include "insectleaf/leaf/params.hpp"
#include "insectleaf/log.hpp"
#include "insectleaf/nn/checkpoint.hpp"
#include "insectleaf/parallel.hpp"
#include "insectleaf/synth.hpp"
#include "insectleaf/train/examples.hpp"
#include "insectleaf/train/model.hpp"
#include "insectleaf/train/trainer.hpp"
#include "insectleaf/wav.hpp"

/// Stage drivers behind the command-line tool. Every stage reads its inputs
/// from the work directory, checks the upstream receipt, writes its outputs
/// and a receipt of its own.
namespace insectleaf::pipeline {

namespace fs = std::filesystem;

/// Fixed layout of a work directory.
struct Layout {
  fs::path root;
  explicit Layout(const fs::path& work_dir) : root(work_dir) {}

  fs::path manifest() const { return root / "manifest.csv"; }
  fs::path split_manifest() const { return root / "split_manifest.csv"; }
  fs::path chunk_dir() const { return root / "chunks"; }
  fs::path chunk_index() const { return chunk_dir() / "index.csv"; }
  fs::path training_index() const { return chunk_dir() / "index_augmented.csv"; }
  fs::path augment_lineage() const { return chunk_dir() / "augment_lineage.csv"; }
  fs::path train_dir(train::FrontendKind k) const { return root / "train" / std::string(train::to_string(k)); }
  fs::path report_dir(train::FrontendKind k) const { return root / "reports" / std::string(train::to_string(k)); }
  fs::path config_copy() const { return root / "config.json"; }
};

struct StageOptions {
  int jobs = 1;
  bool force = false;
  std::ostream* console = nullptr;
};

namespace detail {

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline void say(const StageOptions& o, const std::string& msg) {
  if (o.console) *o.console << msg << '\n' << std::flush;
}

inline std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == '/' || c == '\\' || c == ' ') c = '_';
  return s;
}

inline train::ChunkStoreExamples split_examples(const Layout& l, const std::vector<ChunkIndexRow>& rows, Split s) {
  return train::ChunkStoreExamples(l.chunk_dir(), rows, s);
}

}  // namespace detail

/// Writes the config (with defaults filled in) next to the outputs.
inline void persist_config(const ExperimentConfig& c, const std::string& verbatim = {}) {
  const Layout l(c.work_dir);
  fs::create_directories(l.root);
  std::ofstream os(l.config_copy(), std::ios::trunc);
  os << to_json(c).dump(2) << '\n';
  if (!verbatim.empty()) {
    std::ofstream raw(l.root / "config.original.json", std::ios::trunc);
    raw << verbatim;
  }
}

inline DatasetManifest run_synth(const ExperimentConfig& c, const StageOptions& o) {
  detail::Stopwatch sw;
  auto opt = c.synth;
  auto manifest = synth_dataset(c.data_root, opt, o.jobs);
  Receipt r{"synth", stage_hash(c, Stage::kSynth), opt.seed, {}, {c.data_root}, sw.seconds(), Json::object()};
  r.extra["files"] = manifest.entries().size();
  r.extra["classes"] = manifest.num_classes();
  write_receipt(c.work_dir, r);
  detail::say(o, "synth: wrote " + std::to_string(manifest.entries().size()) + " files in " + std::to_string(manifest.num_classes()) +
                     " classes to " + c.data_root);
  return manifest;
}

inline DatasetManifest run_ingest(const ExperimentConfig& c, const StageOptions& o) {
  detail::Stopwatch sw;
  const Layout l(c.work_dir);
  auto manifest = ingest(c.data_root, c.ingest);
  write_manifest(l.manifest(), manifest);
  Receipt r{"ingest", stage_hash(c, Stage::kIngest), c.seed, {c.data_root}, {l.manifest().string()}, sw.seconds(), Json::object()};
  r.extra["files"] = manifest.entries().size();
  r.extra["classes"] = manifest.num_classes();
  write_receipt(c.work_dir, r);
  detail::say(o, "ingest: " + std::to_string(manifest.entries().size()) + " recordings, " + std::to_string(manifest.num_classes()) + " species");
  return manifest;
}

inline std::uint64_t split_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 0x73706c6974); }

inline DatasetManifest run_split(const ExperimentConfig& c, const StageOptions& o) {
  detail::Stopwatch sw;
  const Layout l(c.work_dir);
  require_stage(c, Stage::kIngest, o.force);
  const auto manifest = split_per_class(read_manifest(l.manifest()), c.split, split_seed(c));
  write_manifest(l.split_manifest(), manifest);
  Receipt r{"split", stage_hash(c, Stage::kSplit), split_seed(c), {l.manifest().string()}, {l.split_manifest().string()}, sw.seconds(),
            Json::object()};
  r.extra["train_files"] = manifest.count(Split::kTrain);
  r.extra["val_files"] = manifest.count(Split::kVal);
  r.extra["test_files"] = manifest.count(Split::kTest);
  write_receipt(c.work_dir, r);
  detail::say(o, "split: train " + std::to_string(manifest.count(Split::kTrain)) + ", val " + std::to_string(manifest.count(Split::kVal)) +
                     ", test " + std::to_string(manifest.count(Split::kTest)) + " files");
  return manifest;
}

inline std::vector<ChunkIndexRow> run_chunk(const ExperimentConfig& c, const StageOptions& o) {
  detail::Stopwatch sw;
  const Layout l(c.work_dir);
  require_stage(c, Stage::kSplit, o.force);
  const auto manifest = read_manifest(l.split_manifest());
  const auto& entries = manifest.entries();
  std::vector<std::vector<ChunkIndexRow>> per_file(entries.size());
  parallel_for(entries.size(), o.jobs, [&](std::size_t i) {
    const auto& e = entries[i];
    if (e.split == Split::kNone) throw DataError("split manifest has an unassigned entry: " + e.path);
    const auto clip = load_entry(e);
    const auto chunks = chunk(clip, c.chunk, manifest.class_id(e.species), e.path);
    for (const auto& ch : chunks) {
      ChunkIndexRow row;
      row.chunk_path = (fs::path(std::string(to_string(e.split))) / e.species /
                        (detail::sanitize(e.source_id) + "_s" + std::to_string(ch.lineage.start_sample) + ".wav"))
                           .generic_string();
      write_wav(l.chunk_dir() / row.chunk_path, ch.samples, kCanonicalRate);
      row.label_id = ch.label_id;
      row.species = ch.species;
      row.split = e.split;
      row.source_path = e.path;
      row.start_s = ch.lineage.start_s;
      row.wrapped = ch.lineage.wrapped;
      per_file[i].push_back(std::move(row));
    }
  });
  std::vector<ChunkIndexRow> rows;
  double total_s = 0.0;
  for (const auto& e : entries) total_s += e.duration_s;
  for (auto& v : per_file) rows.insert(rows.end(), v.begin(), v.end());
  write_chunk_index(l.chunk_index(), rows);
  Receipt r{"chunk", stage_hash(c, Stage::kChunk), c.seed, {l.split_manifest().string()}, {l.chunk_index().string()}, sw.seconds(), Json::object()};
  r.extra["chunks"] = rows.size();
  r.extra["recordings"] = entries.size();
  r.extra["chunk_multiplier"] = entries.empty() ? 0.0 : static_cast<double>(rows.size()) / static_cast<double>(entries.size());
  r.extra["mean_duration_s"] = entries.empty() ? 0.0 : total_s / static_cast<double>(entries.size());
  write_receipt(c.work_dir, r);
  detail::say(o, "chunk: " + std::to_string(rows.size()) + " chunks from " + std::to_string(entries.size()) + " recordings");
  return rows;
}

inline AugmentPlan augment_plan(const ExperimentConfig& c) {
  auto plan = c.augment;
  plan.ir_set = c.ir_dir.empty() ? synthetic_impulse_responses() : load_impulse_responses(c.ir_dir);
  plan.validate();
  return plan;
}

inline std::vector<ChunkIndexRow> run_augment(const ExperimentConfig& c, const StageOptions& o) {
  detail::Stopwatch sw;
  const Layout l(c.work_dir);
  require_stage(c, Stage::kChunk, o.force);
  const auto plan = augment_plan(c);
  const auto manifest = read_manifest(l.split_manifest());
  std::map<std::string, std::string> source_ids;
  for (const auto& e : manifest.entries()) source_ids[e.path] = e.source_id;
  const auto originals = read_chunk_index(l.chunk_index());
  std::vector<ChunkIndexRow> train_rows;
  for (const auto& r : originals)
    if (r.split == Split::kTrain) train_rows.push_back(r);

  const std::size_t n = train_rows.size();
  const std::size_t total = n * static_cast<std::size_t>(plan.generations);
  std::vector<ChunkIndexRow> aug_rows(total);
  std::vector<std::vector<std::string>> lineage(total);
  parallel_for(total, o.jobs, [&](std::size_t job) {
    const int gen = static_cast<int>(job / n) + 1;
    const auto& parent = train_rows[job % n];
    ChunkRecord src;
    src.samples = load_chunk(l.chunk_dir(), parent);
    src.label_id = parent.label_id;
    src.species = parent.species;
    src.split = parent.split;
    src.lineage.source_path = parent.source_path;
    const auto it = source_ids.find(parent.source_path);
    if (it == source_ids.end()) throw DataError("chunk index refers to a recording missing from the split manifest: " + parent.source_path);
    src.lineage.source_id = it->second;
    src.lineage.start_sample = static_cast<std::size_t>(std::llround(parent.start_s * kCanonicalRate));
    src.lineage.start_s = parent.start_s;
    src.lineage.wrapped = parent.wrapped;
    auto [rec, lin] = augment_record(src, job % n, plan, gen);
    ChunkIndexRow row = parent;
    row.aug_gen = gen;
    row.chunk_path = (fs::path("aug") / ("g" + std::to_string(gen)) / parent.species / fs::path(parent.chunk_path).filename()).generic_string();
    write_wav(l.chunk_dir() / row.chunk_path, rec.samples, kCanonicalRate);
    const auto& d = lin.draw;
    lineage[job] = {row.chunk_path, parent.chunk_path, std::to_string(gen), hex64(lin.sub_seed), d.mask ? "1" : "0", fmt_num(d.mask_center_hz),
                    fmt_num(d.mask_fraction), fmt_num(d.snr_db), d.ir_index < 0 ? "" : plan.ir_set[static_cast<std::size_t>(d.ir_index)].id,
                    fmt_num(d.mix), hex64(d.noise_seed)};
    aug_rows[job] = std::move(row);
  });
  std::vector<ChunkIndexRow> all = originals;
  all.insert(all.end(), aug_rows.begin(), aug_rows.end());
  write_chunk_index(l.training_index(), all);
  CsvTable lt{{"chunk_path", "parent_chunk_path", "generation", "sub_seed", "mask", "mask_center_hz", "mask_fraction", "snr_db", "ir_id", "ir_mix",
               "noise_seed"},
              std::move(lineage)};
  write_csv(l.augment_lineage(), lt);
  Receipt r{"augment", stage_hash(c, Stage::kAugment), plan.seed, {l.chunk_index().string()}, {l.training_index().string(), l.augment_lineage().string()},
            sw.seconds(), Json::object()};
  r.extra["train_originals"] = n;
  r.extra["train_total"] = n + total;
  r.extra["multiplier"] = n ? static_cast<double>(n + total) / static_cast<double>(n) : 0.0;
  write_receipt(c.work_dir, r);
  detail::say(o, "augment: " + std::to_string(n) + " training chunks -> " + std::to_string(n + total) + " (" + std::to_string(plan.generations) +
                     " generations)");
  return all;
}

/// Per-layer parameter inventory of a model, as text.
inline std::string parameter_report(train::Model<float>& model) {
  std::ostringstream os;
  std::size_t backend = 0, frontend = 0;
  for (const auto& row : model.parameter_table()) {
    os << row.name << ": " << row.count << '\n';
    (row.name.rfind("leaf.", 0) == 0 ? frontend : backend) += row.count;
  }
  os << "backend total: " << backend << '\n';
  if (model.learnable_frontend()) os << "frontend total: " << frontend << '\n';
  os << "trainable total: " << backend + frontend << '\n';
  if (model.learnable_frontend() && model.config().leaf_init.n_filters == 64 && model.config().n_classes == 32) {
    constexpr std::size_t kReferenceTotal = 27344;
    os << "reference total: " << kReferenceTotal << " (difference " << static_cast<long long>(kReferenceTotal) - static_cast<long long>(backend + frontend)
       << "; the reference count has 64 scalars with no counterpart in this inventory)\n";
  }
  return os.str();
}

inline void write_runs_table(const fs::path& path, const train::ExperimentResult& res, const std::vector<std::string>& class_names) {
  CsvTable t{{"run", "seed", "best_epoch", "epochs_run", "best_val_loss", "restored_val_loss", "test_accuracy", "test_f1", "aborted", "selected"}, {}};
  for (std::size_t i = 0; i < res.runs.size(); ++i) {
    const auto& r = res.runs[i];
    std::string acc, f1;
    if (r.test && !r.test->truth.empty()) {
      const auto m = eval::compute_metrics(eval::confusion_from_predictions<float>(r.test->truth, r.test->scores, class_names));
      acc = fmt_num(m.accuracy);
      f1 = fmt_num(m.macro_f1);
    }
    t.rows.push_back({std::to_string(r.run), hex64(r.seed), std::to_string(r.best_epoch), std::to_string(r.epochs.size()), fmt_num(r.best_val_loss),
                      fmt_num(r.restored_val_loss), acc, f1, r.aborted ? "1" : "0", res.selected && *res.selected == i ? "1" : "0"});
  }
  write_csv(path, t);
}

inline std::size_t class_count(const ExperimentConfig& c) { return read_manifest(Layout(c.work_dir).split_manifest()).num_classes(); }

inline void run_train(const ExperimentConfig& c, const StageOptions& o) {
  detail::Stopwatch sw;
  const Layout l(c.work_dir);
  require_stage(c, Stage::kAugment, o.force);
  const auto manifest = read_manifest(l.split_manifest());
  const auto rows = read_chunk_index(l.training_index());
  const auto train_set = detail::split_examples(l, rows, Split::kTrain);
  const auto val_set = detail::split_examples(l, rows, Split::kVal);
  const auto test_set = detail::split_examples(l, rows, Split::kTest);
  auto tc = c.train;
  tc.jobs = o.jobs;
  Receipt r{"train", stage_hash(c, Stage::kTrain), tc.seed, {l.training_index().string()}, {}, 0.0, Json::object()};
  for (const auto kind : c.frontends()) {
    const auto mc = c.model_config(kind, manifest.num_classes());
    const auto dir = l.train_dir(kind);
    fs::create_directories(dir);
    {
      train::Model<float> probe(mc, 0);
      std::ofstream(dir / "parameters.txt", std::ios::trunc) << parameter_report(probe);
    }
    detail::say(o, "train: " + std::string(train::to_string(kind)) + " frontend, " + std::to_string(train_set.size()) + " training chunks");
    const auto res = train::run_experiment<float>(mc, tc, train_set, val_set, &test_set, dir, stage_hash(c, Stage::kTrain), o.console);
    write_runs_table(dir / "runs.csv", res, manifest.class_names());
    const auto& best = res.runs[*res.selected];
    std::ofstream(dir / "selected.txt", std::ios::trunc) << "run" << best.run << '\n';
    r.outputs.push_back((dir / "runs.csv").string());
    r.extra[std::string(train::to_string(kind))] = {{"selected_run", best.run}, {"best_epoch", best.best_epoch}, {"best_val_loss", best.best_val_loss}};
  }
  r.duration_s = sw.seconds();
  write_receipt(c.work_dir, r);
}

/// Run directory chosen by the train stage for a frontend.
inline fs::path selected_run_dir(const Layout& l, train::FrontendKind kind) {
  std::ifstream in(l.train_dir(kind) / "selected.txt");
  std::string name;
  if (!(in >> name)) throw DataError("no selected run for the " + std::string(train::to_string(kind)) + " frontend; run `insectleaf train` first");
  return l.train_dir(kind) / name;
}

inline void run_evaluate(const ExperimentConfig& c, const StageOptions& o) {
  detail::Stopwatch sw;
  const Layout l(c.work_dir);
  require_stage(c, Stage::kTrain, o.force);
  const auto manifest = read_manifest(l.split_manifest());
  const auto rows = read_chunk_index(l.training_index());
  const auto test_set = detail::split_examples(l, rows, Split::kTest);
  Receipt r{"evaluate", stage_hash(c, Stage::kTrain), c.seed, {}, {}, 0.0, Json::object()};
  for (const auto kind : c.frontends()) {
    const auto run_dir = selected_run_dir(l, kind);
    const auto mc = c.model_config(kind, manifest.num_classes());
    train::Model<float> model(mc, 0);
    const auto ck = nn::read_checkpoint(run_dir / "best.ckpt");
    if (ck.config_hash != stage_hash(c, Stage::kTrain) && !o.force)
      throw ConfigError("checkpoint " + (run_dir / "best.ckpt").string() + " was trained with a different configuration; retrain or pass --force");
    model.load(ck);
    const auto res = train::evaluate_set(model, test_set, c.train.batch_size, o.jobs);
    const auto cm = eval::confusion_from_predictions<float>(res.truth, res.scores, manifest.class_names());
    const auto m = eval::compute_metrics(cm);
    const auto dir = l.report_dir(kind);
    eval::write_confusion_csv(dir / "confusion.csv", cm);
    eval::write_metrics_text(dir / "metrics.txt", m, {{"level", "chunk"}, {"frontend", std::string(train::to_string(kind))}, {"checkpoint_epoch", std::to_string(ck.epoch)}});
    const auto fcm = eval::majority_vote(res.source, res.truth, res.predicted, manifest.class_names());
    eval::write_confusion_csv(dir / "confusion_file_level.csv", fcm);
    eval::write_metrics_text(dir / "metrics_file_level.txt", eval::compute_metrics(fcm), {{"level", "file"}, {"frontend", std::string(train::to_string(kind))}});
    fs::copy_file(run_dir / "training_curve.csv", dir / "training_curve.csv", fs::copy_options::overwrite_existing);
    fs::copy_file(l.train_dir(kind) / "parameters.txt", dir / "parameters.txt", fs::copy_options::overwrite_existing);
    r.outputs.push_back((dir / "metrics.txt").string());
    r.extra[std::string(train::to_string(kind))] = {{"accuracy", m.accuracy}, {"macro_f1", m.macro_f1}};
    detail::say(o, "evaluate (" + std::string(train::to_string(kind)) + "): accuracy " + fmt_num(m.accuracy, 4) + ", macro F1 " + fmt_num(m.macro_f1, 4) +
                       " on " + std::to_string(m.total) + " test chunks");
  }
  r.duration_s = sw.seconds();
  write_receipt(c.work_dir, r);
}

inline void run_analyze_filters(const ExperimentConfig& c, const StageOptions& o) {
  detail::Stopwatch sw;
  const Layout l(c.work_dir);
  require_stage(c, Stage::kTrain, o.force);
  const auto kinds = c.frontends();
  if (std::find(kinds.begin(), kinds.end(), train::FrontendKind::kLeaf) == kinds.end()) {
    warn("analyze-filters: the leaf frontend is not part of this configuration; nothing to analyse");
    return;
  }
  const auto manifest = read_manifest(l.split_manifest());
  const auto mc = c.model_config(train::FrontendKind::kLeaf, manifest.num_classes());
  train::Model<float> model(mc, 0);
  const auto init = model.leaf_params();
  model.load(nn::read_checkpoint(selected_run_dir(l, train::FrontendKind::kLeaf) / "best.ckpt"));
  const auto& trained = model.leaf_params();
  const auto report = eval::filter_drift(init.bank, trained.bank, kCanonicalRate);
  const auto dir = l.report_dir(train::FrontendKind::kLeaf);
  eval::write_filter_drift(dir / "filter_drift.csv", report, dir / "filter_drift_sorted.csv");
  leaf::write_snapshot(dir / "filters_init.csv", init);
  leaf::write_snapshot(dir / "filters_trained.csv", trained);
  double max_shift = 0.0;
  for (const auto& row : report.rows) max_shift = std::max(max_shift, std::abs(row.delta_hz));
  std::ofstream(dir / "drift_summary.txt", std::ios::trunc) << "filters: " << report.rows.size() << '\n'
                                                              << "ordering_violations: " << report.ordering_violations << '\n'
                                                              << "max_abs_delta_hz: " << fmt_num(max_shift) << '\n';
  Receipt r{"analyze-filters", stage_hash(c, Stage::kTrain), c.seed, {}, {(dir / "filter_drift.csv").string()}, sw.seconds(), Json::object()};
  r.extra["ordering_violations"] = report.ordering_violations;
  write_receipt(c.work_dir, r);
  detail::say(o, "analyze-filters: " + std::to_string(report.ordering_violations) + " ordering violations, max shift " + fmt_num(max_shift, 5) + " Hz");
}

/// ingest -> split -> chunk -> augment -> train -> evaluate -> analyze-filters.
inline void run_all(const ExperimentConfig& c, const StageOptions& o) {
  run_ingest(c, o);
  run_split(c, o);
  run_chunk(c, o);
  run_augment(c, o);
  run_train(c, o);
  run_evaluate(c, o);
  run_analyze_filters(c, o);
}

}  // namespace insectleaf::pipeline
