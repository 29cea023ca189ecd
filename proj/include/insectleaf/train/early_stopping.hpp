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
#include <limits>
#include <span>
#include <stdexcept>

namespace insectleaf::train {

/// Patience-based early stopping on validation loss. Epochs are 1-based.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience = 8, bool strict = true) : patience_(patience), strict_(strict) {
    if (patience == 0) throw std::invalid_argument("patience must be at least 1");
  }

  /// Records one epoch's validation loss. Returns true when it is the new
  /// best (the caller should checkpoint).
  bool update(double val_loss) {
    ++epoch_;
    const bool improved = epoch_ == 1 || (strict_ ? val_loss < best_loss_ : val_loss <= best_loss_);
    if (improved) {
      best_loss_ = val_loss;
      best_epoch_ = epoch_;
      counter_ = 0;
    } else {
      ++counter_;
    }
    return improved;
  }

  bool should_stop() const { return counter_ >= patience_; }
  std::size_t counter() const { return counter_; }
  std::size_t patience() const { return patience_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  std::size_t patience_;
  bool strict_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t counter_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct StopOutcome {
  std::size_t best_epoch = 0;
  std::size_t stop_epoch = 0;  // last epoch run
  bool stopped_early = false;
};

/// Replays a recorded validation-loss sequence through the stopping rule.
inline StopOutcome replay_early_stopping(std::span<const double> val_losses, std::size_t patience = 8, bool strict = true) {
  if (val_losses.empty()) throw std::invalid_argument("replay_early_stopping: empty sequence");
  EarlyStopping es(patience, strict);
  StopOutcome out;
  for (const double v : val_losses) {
    es.update(v);
    out.stop_epoch = es.epoch();
    if (es.should_stop()) {
      out.stopped_early = true;
      break;
    }
  }
  out.best_epoch = es.best_epoch();
  return out;
}

}  // namespace insectleaf::train
