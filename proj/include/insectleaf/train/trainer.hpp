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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "insectleaf/csv.hpp"
#include "insectleaf/error.hpp"
#include "insectleaf/eval/metrics.hpp"
#include "insectleaf/rng.hpp"
#include "insectleaf/train/early_stopping.hpp"
#include "insectleaf/train/examples.hpp"
#include "insectleaf/train/model.hpp"
#include "insectleaf/train/optimizer.hpp"

namespace insectleaf::train {

struct TrainConfig {
  std::size_t batch_size = 14;
  std::size_t max_epochs = 60;
  std::size_t patience = 8;
  double learning_rate = 1e-3;
  double weight_decay = 1e-3;
  bool strict_improvement = true;
  std::size_t runs = 5;
  std::uint64_t seed = 42;
  int jobs = 1;

  void validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (max_epochs == 0) throw ConfigError("max_epochs must be at least 1");
    if (patience == 0 || patience >= max_epochs) throw ConfigError("patience must satisfy 1 <= patience < max_epochs");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    if (runs == 0) throw ConfigError("runs must be at least 1");
    if (jobs < 1) throw ConfigError("jobs must be at least 1");
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0, train_acc = 0.0;
  double val_loss = 0.0, val_acc = 0.0;
  std::size_t patience = 0;  // counter after this epoch
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<std::size_t> truth, predicted;
  std::vector<std::string> source;
  std::vector<std::vector<float>> scores;
};

struct RunLog {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double restored_val_loss = std::numeric_limits<double>::quiet_NaN();
  std::filesystem::path checkpoint;
  bool aborted = false;
  std::string abort_reason;
  std::optional<EvalResult> test;
};

inline const std::vector<std::string>& curve_columns() {
  static const std::vector<std::string> cols{"epoch", "train_loss", "train_acc", "val_loss", "val_acc", "patience"};
  return cols;
}

inline std::vector<EpochLog> read_training_curve(const std::filesystem::path& path) {
  const auto t = read_csv(path);
  std::vector<EpochLog> out;
  for (const auto& r : t.rows) {
    EpochLog e;
    e.epoch = static_cast<std::size_t>(parse_int(r[t.column("epoch")], "epoch"));
    e.train_loss = parse_double(r[t.column("train_loss")], "train_loss");
    e.train_acc = parse_double(r[t.column("train_acc")], "train_acc");
    e.val_loss = parse_double(r[t.column("val_loss")], "val_loss");
    e.val_acc = parse_double(r[t.column("val_acc")], "val_acc");
    e.patience = static_cast<std::size_t>(parse_int(r[t.column("patience")], "patience"));
    out.push_back(e);
  }
  return out;
}

namespace detail {
inline std::string two_dp(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}
}  // namespace detail

/// Evaluation-mode pass over a set in fixed order.
template <typename T>
EvalResult evaluate_set(Model<T>& model, const ExampleSet& set, std::size_t batch_size, int jobs = 1) {
  EvalResult r;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    const std::size_t end = std::min(set.size(), start + batch_size);
    std::vector<std::vector<float>> xs(end - start);
    std::vector<std::size_t> ys;
    parallel_for(end - start, jobs, [&](std::size_t i) { xs[i] = set.samples(start + i); });
    for (std::size_t i = start; i < end; ++i) {
      ys.push_back(set.label(i));
      r.source.push_back(set.source(i));
    }
    auto b = model.evaluate(xs, ys, jobs);
    loss_sum += b.loss * static_cast<double>(b.count);
    correct += b.correct;
    for (std::size_t i = 0; i < b.scores.size(); ++i) {
      r.truth.push_back(ys[i]);
      r.predicted.push_back(eval::predict(std::span<const float>(b.scores[i])));
      r.scores.push_back(std::move(b.scores[i]));
    }
  }
  if (set.size() > 0) {
    r.loss = loss_sum / static_cast<double>(set.size());
    r.accuracy = static_cast<double>(correct) / static_cast<double>(set.size());
  }
  return r;
}

/// One full training run with early stopping. The best model is written
/// to `<run_dir>/best.ckpt`; test scores (if a test set is given) are
/// computed once, on that checkpoint reloaded from disk.
template <typename T>
RunLog train_run(const ModelConfig& mc, const TrainConfig& tc, std::size_t run_index, std::uint64_t run_seed, const ExampleSet& train_set,
                 const ExampleSet& val_set, const ExampleSet* test_set, const std::filesystem::path& run_dir, std::uint64_t config_hash,
                 std::ostream* console = nullptr) {
  tc.validate();
  if (train_set.size() == 0 || val_set.size() == 0) throw DataError("training needs non-empty train and validation sets");
  std::filesystem::create_directories(run_dir);
  RunLog log;
  log.run = run_index;
  log.seed = run_seed;
  log.checkpoint = run_dir / "best.ckpt";

  Model<T> model(mc, derive_seed(run_seed, 1));
  AdamW<T> opt({tc.learning_rate, 0.9, 0.999, 1e-8, tc.weight_decay});
  EarlyStopping stopper(tc.patience, tc.strict_improvement);
  Rng dropout_rng(derive_seed(run_seed, 2));

  std::ofstream curve(run_dir / "training_curve.csv", std::ios::trunc);
  if (!curve) throw DataError("cannot write training curve in " + run_dir.string());
  curve << csv_join(curve_columns()) << '\n';

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(run_seed, 3, epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      std::vector<std::vector<float>> xs(end - start);
      std::vector<std::size_t> ys(end - start);
      parallel_for(end - start, tc.jobs, [&](std::size_t i) { xs[i] = train_set.samples(order[start + i]); });
      for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = train_set.label(order[start + i]);
      const auto b = model.train_step(xs, ys, opt, dropout_rng, tc.jobs);
      if (!std::isfinite(b.loss)) {
        log.aborted = true;
        log.abort_reason = "non-finite training loss in epoch " + std::to_string(epoch) + " (batch starting at " + std::to_string(start) + ")";
        throw TrainingAborted(log.abort_reason);
      }
      loss_sum += b.loss * static_cast<double>(b.count);
      correct += b.correct;
    }
    EpochLog e;
    e.epoch = epoch;
    e.train_loss = loss_sum / static_cast<double>(order.size());
    e.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    const auto val = evaluate_set(model, val_set, tc.batch_size, tc.jobs);
    if (!std::isfinite(val.loss)) throw TrainingAborted("non-finite validation loss in epoch " + std::to_string(epoch));
    e.val_loss = val.loss;
    e.val_acc = val.accuracy;
    const bool improved = stopper.update(e.val_loss);
    e.patience = stopper.counter();
    if (improved) {
      auto ck = model.checkpoint();
      ck.config_hash = config_hash;
      ck.epoch = static_cast<std::uint32_t>(epoch);
      ck.val_loss = e.val_loss;
      nn::write_checkpoint(log.checkpoint, ck);
    }
    log.epochs.push_back(e);
    curve << e.epoch << ',' << fmt_num(e.train_loss) << ',' << fmt_num(e.train_acc) << ',' << fmt_num(e.val_loss) << ',' << fmt_num(e.val_acc)
          << ',' << e.patience << '\n';
    curve.flush();
    if (console) {
      *console << 'E' << epoch << " Training Loss: " << detail::two_dp(e.train_loss) << ", Accuracy: " << detail::two_dp(e.train_acc) << '\n'
               << 'E' << epoch << " Validation Loss: " << detail::two_dp(e.val_loss) << ", Accuracy: " << detail::two_dp(e.val_acc) << '\n'
               << "Patience: " << stopper.counter() << '/' << tc.patience << '\n';
      console->flush();
    }
    if (stopper.should_stop()) {
      if (console) *console << "Stop Training\n";
      break;
    }
  }
  log.best_epoch = stopper.best_epoch();
  log.best_val_loss = stopper.best_loss();

  Model<T> best(mc, 0);
  const auto ck = nn::read_checkpoint(log.checkpoint);
  if (ck.config_hash != config_hash) throw DataError("checkpoint config hash mismatch: " + log.checkpoint.string());
  best.load(ck);
  log.restored_val_loss = evaluate_set(best, val_set, tc.batch_size, tc.jobs).loss;
  if (test_set) log.test = evaluate_set(best, *test_set, tc.batch_size, tc.jobs);
  return log;
}

struct ExperimentResult {
  std::vector<RunLog> runs;
  std::optional<std::size_t> selected;  // index into runs
};

/// Lowest best validation loss among runs that finished; ties go to the
/// earlier run.
inline std::optional<std::size_t> select_run(const std::vector<RunLog>& runs) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (runs[i].aborted) continue;
    if (!best || runs[i].best_val_loss < runs[*best].best_val_loss) best = i;
  }
  return best;
}

inline std::uint64_t run_seed(std::uint64_t seed, std::size_t run) { return derive_seed(seed, 0x72756e, run); }

/// `runs` independent trainings under derived seeds, each in
/// `<out_dir>/run<k>`. Aborted runs are recorded and skipped in selection.
template <typename T>
ExperimentResult run_experiment(const ModelConfig& mc, const TrainConfig& tc, const ExampleSet& train_set, const ExampleSet& val_set,
                                const ExampleSet* test_set, const std::filesystem::path& out_dir, std::uint64_t config_hash,
                                std::ostream* console = nullptr) {
  tc.validate();
  ExperimentResult result;
  for (std::size_t r = 0; r < tc.runs; ++r) {
    const auto seed = run_seed(tc.seed, r);
    const auto dir = out_dir / ("run" + std::to_string(r + 1));
    if (console) *console << "run " << (r + 1) << '/' << tc.runs << " (" << to_string(mc.frontend) << " frontend)\n";
    try {
      result.runs.push_back(train_run<T>(mc, tc, r + 1, seed, train_set, val_set, test_set, dir, config_hash, console));
    } catch (const TrainingAborted& e) {
      RunLog log;
      log.run = r + 1;
      log.seed = seed;
      log.aborted = true;
      log.abort_reason = e.what();
      if (console) *console << "run " << (r + 1) << " aborted: " << e.what() << '\n';
      result.runs.push_back(std::move(log));
    }
  }
  result.selected = select_run(result.runs);
  if (!result.selected) throw TrainingAborted("every training run aborted");
  return result;
}

}  // namespace insectleaf::train
