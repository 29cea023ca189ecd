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
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "insectleaf/csv.hpp"
#include "insectleaf/error.hpp"

namespace insectleaf::eval {

/// Rows are true labels, columns predicted labels.
struct ConfusionMatrix {
  std::vector<std::string> class_names;
  std::vector<std::size_t> counts;  // row-major C x C

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<std::string> names)
      : class_names(std::move(names)), counts(class_names.size() * class_names.size(), 0) {}

  std::size_t size() const { return class_names.size(); }
  std::size_t& at(std::size_t truth, std::size_t pred) { return counts[truth * size() + pred]; }
  std::size_t at(std::size_t truth, std::size_t pred) const { return counts[truth * size() + pred]; }

  std::size_t total() const {
    std::size_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
  std::size_t row_sum(std::size_t truth) const {
    std::size_t t = 0;
    for (std::size_t p = 0; p < size(); ++p) t += at(truth, p);
    return t;
  }
  std::size_t col_sum(std::size_t pred) const {
    std::size_t t = 0;
    for (std::size_t r = 0; r < size(); ++r) t += at(r, pred);
    return t;
  }
};

struct Metrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision, recall, f1;  // per class
  std::size_t total = 0;
};

/// Accuracy plus unweighted per-class means of precision, recall and F1.
/// Any 0/0 ratio counts as 0.
inline Metrics compute_metrics(const ConfusionMatrix& cm) {
  const std::size_t c = cm.size();
  if (c == 0 || cm.counts.size() != c * c) throw std::invalid_argument("compute_metrics: empty confusion matrix");
  Metrics m;
  m.total = cm.total();
  if (m.total == 0) throw std::invalid_argument("compute_metrics: confusion matrix has no counts");
  const auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  std::size_t trace = 0;
  for (std::size_t k = 0; k < c; ++k) {
    const double tp = static_cast<double>(cm.at(k, k));
    trace += cm.at(k, k);
    const double p = ratio(tp, static_cast<double>(cm.col_sum(k)));
    const double r = ratio(tp, static_cast<double>(cm.row_sum(k)));
    m.precision.push_back(p);
    m.recall.push_back(r);
    m.f1.push_back(ratio(2.0 * p * r, p + r));
  }
  m.accuracy = static_cast<double>(trace) / static_cast<double>(m.total);
  for (std::size_t k = 0; k < c; ++k) {
    m.macro_precision += m.precision[k];
    m.macro_recall += m.recall[k];
    m.macro_f1 += m.f1[k];
  }
  m.macro_precision /= static_cast<double>(c);
  m.macro_recall /= static_cast<double>(c);
  m.macro_f1 /= static_cast<double>(c);
  return m;
}

/// Predicted class = highest score, ties to the lowest index.
template <typename T>
std::size_t predict(std::span<const T> scores) {
  if (scores.empty()) throw std::invalid_argument("predict: empty score vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

template <typename T>
ConfusionMatrix confusion_from_predictions(std::span<const std::size_t> truth, const std::vector<std::vector<T>>& scores,
                                           std::vector<std::string> class_names) {
  if (truth.size() != scores.size()) throw std::invalid_argument("confusion_from_predictions: label and score counts differ");
  ConfusionMatrix cm(std::move(class_names));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (scores[i].size() != cm.size()) throw std::invalid_argument("confusion_from_predictions: score vector has wrong length");
    if (truth[i] >= cm.size()) throw std::invalid_argument("confusion_from_predictions: label id " + std::to_string(truth[i]) + " out of range");
    ++cm.at(truth[i], predict(std::span<const T>(scores[i])));
  }
  return cm;
}

/// File-level view: each source file is assigned the majority chunk
/// prediction (ties to the lowest class index).
inline ConfusionMatrix majority_vote(std::span<const std::string> source, std::span<const std::size_t> truth,
                                     std::span<const std::size_t> predicted, std::vector<std::string> class_names) {
  if (source.size() != truth.size() || truth.size() != predicted.size()) throw std::invalid_argument("majority_vote: length mismatch");
  ConfusionMatrix cm(std::move(class_names));
  std::map<std::string, std::pair<std::size_t, std::vector<std::size_t>>> votes;
  for (std::size_t i = 0; i < source.size(); ++i) {
    auto& [label, tally] = votes[source[i]];
    if (tally.empty()) {
      tally.assign(cm.size(), 0);
      label = truth[i];
    } else if (label != truth[i]) {
      throw std::invalid_argument("majority_vote: file '" + source[i] + "' has chunks with different labels");
    }
    if (predicted[i] >= cm.size() || truth[i] >= cm.size()) throw std::invalid_argument("majority_vote: label out of range");
    ++tally[predicted[i]];
  }
  for (const auto& [name, entry] : votes) ++cm.at(entry.first, predict(std::span<const std::size_t>(entry.second)));
  return cm;
}

inline void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm) {
  CsvTable t;
  t.header.push_back("true\\predicted");
  for (const auto& n : cm.class_names) t.header.push_back(n);
  for (std::size_t r = 0; r < cm.size(); ++r) {
    std::vector<std::string> row{cm.class_names[r]};
    for (std::size_t p = 0; p < cm.size(); ++p) row.push_back(std::to_string(cm.at(r, p)));
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

inline ConfusionMatrix read_confusion_csv(const std::filesystem::path& path) {
  const auto t = read_csv(path);
  ConfusionMatrix cm(std::vector<std::string>(t.header.begin() + 1, t.header.end()));
  if (t.rows.size() != cm.size()) throw DataError("confusion matrix is not square: " + path.string());
  for (std::size_t r = 0; r < cm.size(); ++r) {
    if (t.rows[r][0] != cm.class_names[r]) throw DataError("confusion matrix row/column names differ: " + path.string());
    for (std::size_t p = 0; p < cm.size(); ++p) {
      const auto v = parse_int(t.rows[r][p + 1], "confusion count");
      if (v < 0) throw DataError("negative confusion count in " + path.string());
      cm.at(r, p) = static_cast<std::size_t>(v);
    }
  }
  return cm;
}

/// Flat "key: value" text, one metric per line.
inline void write_metrics_text(const std::filesystem::path& path, const Metrics& m, const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write metrics: " + path.string());
  os << "accuracy: " << fmt_num(m.accuracy) << '\n'
     << "f1: " << fmt_num(m.macro_f1) << '\n'
     << "recall: " << fmt_num(m.macro_recall) << '\n'
     << "precision: " << fmt_num(m.macro_precision) << '\n'
     << "support: " << m.total << '\n';
  for (const auto& [k, v] : extra) os << k << ": " << v << '\n';
}

}  // namespace insectleaf::eval
