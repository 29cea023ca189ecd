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

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace insectleaf::train {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;
};

/// One optimised tensor: values, their gradient, and whether decoupled
/// weight decay applies.
template <typename T>
struct ParamSlot {
  std::span<T> value;
  std::span<const T> grad;
  bool decay = true;
};

/// Adam with decoupled weight decay. The slot list must have the same
/// layout on every step.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {
    if (!(config.learning_rate >= 0.0) || !(config.weight_decay >= 0.0)) throw std::invalid_argument("learning rate and weight decay must be non-negative");
  }

  const AdamWConfig& config() const { return config_; }
  std::size_t steps() const { return step_; }

  void step(std::span<const ParamSlot<T>> slots) {
    if (m_.empty()) {
      for (const auto& s : slots) {
        m_.emplace_back(s.value.size(), 0.0);
        v_.emplace_back(s.value.size(), 0.0);
      }
    }
    if (m_.size() != slots.size()) throw std::logic_error("AdamW: parameter layout changed between steps");
    ++step_;
    const double lr = config_.learning_rate;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const auto& s = slots[k];
      if (s.value.size() != m_[k].size() || s.grad.size() != s.value.size()) throw std::logic_error("AdamW: parameter size changed");
      const double decay = s.decay ? 1.0 - lr * config_.weight_decay : 1.0;
      for (std::size_t i = 0; i < s.value.size(); ++i) {
        const double g = s.grad[i];
        double& m = m_[k][i];
        double& v = v_[k][i];
        m = config_.beta1 * m + (1.0 - config_.beta1) * g;
        v = config_.beta2 * v + (1.0 - config_.beta2) * g * g;
        const double update = lr * (m / c1) / (std::sqrt(v / c2) + config_.eps);
        s.value[i] = static_cast<T>(static_cast<double>(s.value[i]) * decay - update);
      }
    }
  }

 private:
  AdamWConfig config_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace insectleaf::train
