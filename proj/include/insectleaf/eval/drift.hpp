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
#include <cstddef>
#include <filesystem>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "insectleaf/csv.hpp"
#include "insectleaf/leaf/params.hpp"
#include "insectleaf/mel.hpp"

namespace insectleaf::eval {

struct FilterDriftRow {
  std::size_t filter_id = 0;
  double init_hz = 0.0, init_mel = 0.0;
  double trained_hz = 0.0, trained_mel = 0.0;
  double delta_hz = 0.0, delta_mel = 0.0;
  std::size_t sorted_rank = 0;  // position when ordered by trained frequency
};

struct FilterDriftReport {
  std::vector<FilterDriftRow> rows;         // filter index order
  std::vector<std::size_t> sorted_order;    // filter ids by ascending trained frequency
  std::size_t ordering_violations = 0;      // adjacent descents in index order
};

/// Number of i with v[i + 1] < v[i].
inline std::size_t count_descents(std::span<const double> v) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] < v[i - 1]) ++n;
  return n;
}

inline FilterDriftReport filter_drift(std::span<const double> init_hz, std::span<const double> trained_hz) {
  if (init_hz.size() != trained_hz.size()) throw std::invalid_argument("filter_drift: filter counts differ");
  FilterDriftReport r;
  const std::size_t n = init_hz.size();
  r.sorted_order.resize(n);
  std::iota(r.sorted_order.begin(), r.sorted_order.end(), std::size_t{0});
  std::stable_sort(r.sorted_order.begin(), r.sorted_order.end(), [&](std::size_t a, std::size_t b) { return trained_hz[a] < trained_hz[b]; });
  r.rows.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& row = r.rows[i];
    row.filter_id = i;
    row.init_hz = init_hz[i];
    row.trained_hz = trained_hz[i];
    row.init_mel = hz_to_mel(init_hz[i]);
    row.trained_mel = hz_to_mel(trained_hz[i]);
    row.delta_hz = row.trained_hz - row.init_hz;
    row.delta_mel = row.trained_mel - row.init_mel;
  }
  for (std::size_t k = 0; k < n; ++k) r.rows[r.sorted_order[k]].sorted_rank = k;
  r.ordering_violations = count_descents(trained_hz);
  return r;
}

template <typename T>
std::vector<double> center_hz(const leaf::GaborBank<T>& bank, double sample_rate) {
  std::vector<double> hz;
  hz.reserve(bank.size());
  for (const auto e : bank.eta) hz.push_back(static_cast<double>(e) * sample_rate / (2.0 * M_PI));
  return hz;
}

template <typename T>
FilterDriftReport filter_drift(const leaf::GaborBank<T>& init, const leaf::GaborBank<T>& trained, double sample_rate) {
  const auto a = center_hz(init, sample_rate), b = center_hz(trained, sample_rate);
  return filter_drift(a, b);
}

inline const std::vector<std::string>& drift_columns() {
  static const std::vector<std::string> cols{"filter_id", "init_hz", "init_mel", "trained_hz", "trained_mel", "delta_hz", "delta_mel", "sorted_rank"};
  return cols;
}

/// Writes the index-ordered table to `path`; when `sorted_path` is given,
/// the same rows ordered by trained frequency go there.
inline void write_filter_drift(const std::filesystem::path& path, const FilterDriftReport& r, const std::filesystem::path& sorted_path = {}) {
  const auto to_row = [](const FilterDriftRow& d) {
    return std::vector<std::string>{std::to_string(d.filter_id), fmt_num(d.init_hz), fmt_num(d.init_mel), fmt_num(d.trained_hz),
                                    fmt_num(d.trained_mel), fmt_num(d.delta_hz), fmt_num(d.delta_mel), std::to_string(d.sorted_rank)};
  };
  CsvTable t{drift_columns(), {}};
  for (const auto& d : r.rows) t.rows.push_back(to_row(d));
  write_csv(path, t);
  if (!sorted_path.empty()) {
    CsvTable s{drift_columns(), {}};
    for (const auto id : r.sorted_order) s.rows.push_back(to_row(r.rows[id]));
    write_csv(sorted_path, s);
  }
}

inline FilterDriftReport read_filter_drift(const std::filesystem::path& path) {
  const auto t = read_csv(path);
  for (const auto& c : drift_columns()) t.column(c);
  FilterDriftReport r;
  std::vector<double> trained;
  for (const auto& row : t.rows) {
    FilterDriftRow d;
    d.filter_id = static_cast<std::size_t>(parse_int(row[t.column("filter_id")], "filter_id"));
    d.init_hz = parse_double(row[t.column("init_hz")], "init_hz");
    d.init_mel = parse_double(row[t.column("init_mel")], "init_mel");
    d.trained_hz = parse_double(row[t.column("trained_hz")], "trained_hz");
    d.trained_mel = parse_double(row[t.column("trained_mel")], "trained_mel");
    d.delta_hz = parse_double(row[t.column("delta_hz")], "delta_hz");
    d.delta_mel = parse_double(row[t.column("delta_mel")], "delta_mel");
    d.sorted_rank = static_cast<std::size_t>(parse_int(row[t.column("sorted_rank")], "sorted_rank"));
    if (d.filter_id != r.rows.size()) throw DataError("filter drift rows out of order in " + path.string());
    trained.push_back(d.trained_hz);
    r.rows.push_back(d);
  }
  r.sorted_order.assign(r.rows.size(), 0);
  for (const auto& d : r.rows) {
    if (d.sorted_rank >= r.rows.size()) throw DataError("bad sorted_rank in " + path.string());
    r.sorted_order[d.sorted_rank] = d.filter_id;
  }
  r.ordering_violations = count_descents(trained);
  return r;
}

}  // namespace insectleaf::eval
