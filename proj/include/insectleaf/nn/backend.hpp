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
#include <functional>
#include <string>
#include <vector>

#include "insectleaf/nn/layers.hpp"
#include "insectleaf/rng.hpp"

namespace insectleaf::nn {

struct ConvBlockSpec {
  std::size_t in_ch, out_ch, kernel, stride, pad;
};

struct BackendSpec {
  std::vector<ConvBlockSpec> blocks{{1, 8, 5, 2, 2}, {8, 16, 3, 2, 1}, {16, 32, 3, 2, 1}, {32, 64, 3, 2, 1}};
  std::size_t n_classes = 32;
  std::size_t in_bands = 64;
  std::size_t in_frames = 1500;
  double dropout = 0.4;
};

struct LayerCount {
  std::string name;
  std::size_t count;
};

/// Four conv -> ReLU -> batch-norm blocks, global average pooling, dropout
/// on the pooled features and a linear classifier head.
template <typename T>
class Backend {
 public:
  explicit Backend(BackendSpec spec = {}, std::uint64_t seed = 0) : spec_(checked(std::move(spec))), dropout_(spec_.dropout), head_("head", spec_.blocks.back().out_ch, spec_.n_classes) {
    for (std::size_t b = 0; b < spec_.blocks.size(); ++b) {
      const auto& s = spec_.blocks[b];
      if (b > 0 && s.in_ch != spec_.blocks[b - 1].out_ch) throw std::invalid_argument("backend block channels do not chain");
      const std::string name = "block" + std::to_string(b + 1);
      convs_.emplace_back(name + ".conv", s.in_ch, s.out_ch, s.kernel, s.stride, s.pad);
      relus_.emplace_back();
      norms_.emplace_back(name + ".bn", s.out_ch);
    }
    reset(seed);
  }

  const BackendSpec& spec() const { return spec_; }
  std::size_t n_classes() const { return spec_.n_classes; }

  void reset(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& c : convs_) c.reset(rng);
    for (auto& n : norms_) n.reset();
    head_.reset(rng);
  }

  /// Input is (n, 1, bands, frames); returns (n, classes, 1, 1) logits.
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* dropout_rng = nullptr) {
    if (x.c != spec_.blocks.front().in_ch || x.h != spec_.in_bands || x.w != spec_.in_frames)
      throw std::invalid_argument("backend input must be (n, " + std::to_string(spec_.blocks.front().in_ch) + ", " + std::to_string(spec_.in_bands) +
                                  ", " + std::to_string(spec_.in_frames) + "), got (" + std::to_string(x.n) + ", " + std::to_string(x.c) + ", " +
                                  std::to_string(x.h) + ", " + std::to_string(x.w) + ")");
    trace_.clear();
    Tensor<T> a = x;
    for (std::size_t b = 0; b < convs_.size(); ++b) {
      a = convs_[b].forward(a);
      a = relus_[b].forward(a);
      a = norms_[b].forward(a, mode);
      trace_.push_back({a.c, a.h, a.w});
    }
    a = pool_.forward(a);
    a = dropout_.forward(a, mode, dropout_rng);
    return head_.forward(a);
  }

  /// Accumulates parameter gradients. Returns d loss / d input when
  /// `need_input_grad` is set, an empty tensor otherwise.
  Tensor<T> backward(const Tensor<T>& grad_logits, bool need_input_grad) {
    Tensor<T> g = head_.backward(grad_logits);
    g = dropout_.backward(g);
    g = pool_.backward(g);
    for (std::size_t b = convs_.size(); b-- > 0;) {
      g = norms_[b].backward(g);
      g = relus_[b].backward(g);
      g = convs_[b].backward(g, b > 0 || need_input_grad);
    }
    return g;
  }

  /// Activation shapes (c, h, w) after each block of the last forward pass.
  struct Shape {
    std::size_t c, h, w;
  };
  const std::vector<Shape>& trace() const { return trace_; }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (std::size_t b = 0; b < convs_.size(); ++b) {
      out.push_back(&convs_[b].weight);
      out.push_back(&convs_[b].bias);
      out.push_back(&norms_[b].scale);
      out.push_back(&norms_[b].shift);
    }
    out.push_back(&head_.weight);
    out.push_back(&head_.bias);
    return out;
  }

  /// Non-learnable state saved with checkpoints (batch-norm running stats).
  std::vector<std::pair<std::string, AlignedVector<T>*>> buffers() {
    std::vector<std::pair<std::string, AlignedVector<T>*>> out;
    for (auto& n : norms_) {
      out.emplace_back(n.scale.name.substr(0, n.scale.name.size() - 7) + ".running_mean", &n.running_mean);
      out.emplace_back(n.scale.name.substr(0, n.scale.name.size() - 7) + ".running_var", &n.running_var);
    }
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  std::vector<LayerCount> layer_table() {
    std::vector<LayerCount> rows;
    for (std::size_t b = 0; b < convs_.size(); ++b) {
      rows.push_back({convs_[b].weight.name.substr(0, convs_[b].weight.name.size() - 7), convs_[b].weight.size() + convs_[b].bias.size()});
      rows.push_back({norms_[b].scale.name.substr(0, norms_[b].scale.name.size() - 7), norms_[b].scale.size() + norms_[b].shift.size()});
    }
    rows.push_back({"head", head_.weight.size() + head_.bias.size()});
    return rows;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (const auto& r : layer_table()) n += r.count;
    return n;
  }

 private:
  static BackendSpec checked(BackendSpec s) {
    if (s.blocks.empty() || s.n_classes < 2) throw std::invalid_argument("backend needs at least one block and two classes");
    return s;
  }

  BackendSpec spec_;
  std::vector<Conv2d<T>> convs_;
  std::vector<Relu<T>> relus_;
  std::vector<BatchNorm2d<T>> norms_;
  GlobalAvgPool<T> pool_;
  Dropout<T> dropout_;
  Linear<T> head_;
  std::vector<Shape> trace_;
};

}  // namespace insectleaf::nn
