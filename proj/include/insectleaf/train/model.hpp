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
#include <string>
#include <string_view>
#include <vector>

#include "insectleaf/error.hpp"
#include "insectleaf/leaf/frontend.hpp"
#include "insectleaf/leaf/params.hpp"
#include "insectleaf/mel.hpp"
#include "insectleaf/nn/backend.hpp"
#include "insectleaf/nn/checkpoint.hpp"
#include "insectleaf/parallel.hpp"
#include "insectleaf/train/optimizer.hpp"

namespace insectleaf::train {

enum class FrontendKind { kMel, kLeaf };

inline FrontendKind parse_frontend(std::string_view s) {
  if (s == "mel") return FrontendKind::kMel;
  if (s == "leaf") return FrontendKind::kLeaf;
  throw ConfigError("unknown frontend '" + std::string(s) + "' (expected mel or leaf)");
}
inline std::string_view to_string(FrontendKind k) { return k == FrontendKind::kMel ? "mel" : "leaf"; }

struct ModelConfig {
  FrontendKind frontend = FrontendKind::kMel;
  MelConfig mel;
  leaf::LeafInit leaf_init;
  leaf::LeafConfig leaf;
  std::size_t n_classes = 32;
  double dropout = 0.4;

  nn::BackendSpec backend_spec() const {
    nn::BackendSpec s;
    s.n_classes = n_classes;
    s.dropout = dropout;
    if (frontend == FrontendKind::kMel) {
      s.in_bands = mel.n_filters;
      s.in_frames = mel.frames();
    } else {
      s.in_bands = leaf_init.n_filters;
      s.in_frames = (leaf.chunk_samples + leaf_init.pool_stride - 1) / leaf_init.pool_stride;
    }
    return s;
  }
};

struct BatchResult {
  double loss = 0.0;         // batch mean cross-entropy
  std::size_t correct = 0;
  std::size_t count = 0;
  std::vector<std::vector<float>> scores;  // logits per example (evaluation only)
};

/// Frontend (fixed mel or learnable LEAF) followed by the CNN backend.
template <typename T>
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed)
      : config_(std::move(config)), mel_(config_.mel), leaf_(config_.leaf), backend_(config_.backend_spec(), seed) {
    if (config_.frontend == FrontendKind::kLeaf) {
      leaf_params_ = leaf::init_leaf_params<T>(config_.leaf_init);
      leaf_grad_ = leaf::LeafFrontend<T>::zeros_like(leaf_params_);
    }
  }

  const ModelConfig& config() const { return config_; }
  nn::Backend<T>& backend() { return backend_; }
  const leaf::LeafParams<T>& leaf_params() const { return leaf_params_; }
  leaf::LeafParams<T>& leaf_params() { return leaf_params_; }
  const leaf::LeafParams<T>& leaf_grad() const { return leaf_grad_; }
  bool learnable_frontend() const { return config_.frontend == FrontendKind::kLeaf; }

  FeatureMapT<T> features(std::span<const float> x) const {
    if (config_.frontend == FrontendKind::kLeaf) return leaf_.forward(x, leaf_params_);
    const auto f = mel_.features(x);
    FeatureMapT<T> out(f.bands, f.frames);
    out.band_hz = f.band_hz;
    out.frame_seconds = f.frame_seconds;
    for (std::size_t i = 0; i < f.values.size(); ++i) out.values[i] = static_cast<T>(f.values[i]);
    return out;
  }

  /// Forward + backward in training mode. Leaves gradients in the backend
  /// parameters and `leaf_grad()`; does not update anything.
  BatchResult compute_gradients(const std::vector<std::vector<float>>& xs, std::span<const std::size_t> labels, Rng& dropout_rng, int jobs = 1) {
    const std::size_t n = xs.size();
    if (n == 0 || labels.size() != n) throw std::invalid_argument("compute_gradients: empty batch or label mismatch");
    std::vector<typename leaf::LeafFrontend<T>::Cache> caches(learnable_frontend() ? n : 0);
    nn::Tensor<T> input = frontend_batch(xs, jobs, learnable_frontend() ? &caches : nullptr);

    backend_.zero_grad();
    const auto logits = backend_.forward(input, nn::Mode::kTrain, &dropout_rng);
    nn::Tensor<T> grad_logits;
    const auto loss = nn::softmax_cross_entropy(logits, labels, &grad_logits);
    BatchResult r{loss.loss, loss.correct, n, {}};
    if (!std::isfinite(r.loss)) return r;
    const auto grad_input = backend_.backward(grad_logits, learnable_frontend());

    if (learnable_frontend()) {
      std::vector<leaf::LeafParams<T>> per_example(n);
      parallel_for(n, jobs, [&](std::size_t i) {
        FeatureMapT<T> g(grad_input.h, grad_input.w);
        const auto s = grad_input.sample(i);
        std::copy(s.begin(), s.end(), g.values.begin());
        per_example[i] = leaf_.backward(xs[i], leaf_params_, caches[i], g);
        caches[i] = {};
      });
      leaf_grad_ = leaf::LeafFrontend<T>::zeros_like(leaf_params_);
      std::vector<std::vector<T>*> acc;
      leaf_grad_.for_each_vector([&](const char*, std::vector<T>& v) { acc.push_back(&v); });
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t k = 0;
        per_example[i].for_each_vector([&](const char*, const std::vector<T>& v) {
          auto& dst = *acc[k++];
          for (std::size_t j = 0; j < v.size(); ++j) dst[j] += v[j];
        });
      }
    }
    return r;
  }

  /// One optimisation step on a batch. LEAF parameters are projected back
  /// into their admissible ranges afterwards.
  BatchResult train_step(const std::vector<std::vector<float>>& xs, std::span<const std::size_t> labels, AdamW<T>& opt, Rng& dropout_rng,
                         int jobs = 1) {
    auto r = compute_gradients(xs, labels, dropout_rng, jobs);
    if (!std::isfinite(r.loss)) return r;
    const auto s = slots();
    opt.step(s);
    if (learnable_frontend()) leaf::project_constraints(leaf_params_);
    return r;
  }

  /// Evaluation-mode scores for a batch.
  BatchResult evaluate(const std::vector<std::vector<float>>& xs, std::span<const std::size_t> labels, int jobs = 1) {
    const std::size_t n = xs.size();
    BatchResult r;
    r.count = n;
    if (n == 0) return r;
    const auto logits = backend_.forward(frontend_batch(xs, jobs, nullptr), nn::Mode::kEval);
    if (!labels.empty()) {
      const auto loss = nn::softmax_cross_entropy(logits, labels);
      r.loss = loss.loss;
      r.correct = loss.correct;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = logits.sample(i);
      r.scores.emplace_back(s.begin(), s.end());
    }
    return r;
  }

  /// Optimiser slots: backend tensors (decayed) then LEAF vectors (not decayed).
  std::vector<ParamSlot<T>> slots() {
    std::vector<ParamSlot<T>> out;
    for (auto* p : backend_.parameters()) out.push_back({p->value, p->grad, p->decay});
    if (learnable_frontend()) {
      std::vector<std::vector<T>*> grads;
      leaf_grad_.for_each_vector([&](const char*, std::vector<T>& v) { grads.push_back(&v); });
      std::size_t k = 0;
      leaf_params_.for_each_vector([&](const char*, std::vector<T>& v) { out.push_back({v, *grads[k++], false}); });
    }
    return out;
  }

  std::vector<nn::LayerCount> parameter_table() {
    auto rows = backend_.layer_table();
    if (learnable_frontend())
      leaf_params_.for_each_vector([&](const char* name, const std::vector<T>& v) { rows.push_back({std::string("leaf.") + name, v.size()}); });
    return rows;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (const auto& r : parameter_table()) n += r.count;
    return n;
  }

  nn::Checkpoint checkpoint() {
    nn::Checkpoint ck;
    for (auto* p : backend_.parameters()) ck.put(p->name, p->value);
    for (auto& [name, buf] : backend_.buffers()) ck.put(name, *buf);
    if (learnable_frontend()) leaf_params_.for_each_vector([&](const char* name, const std::vector<T>& v) { ck.put(std::string("leaf.") + name, v); });
    return ck;
  }

  void load(const nn::Checkpoint& ck) {
    for (auto* p : backend_.parameters()) ck.get(p->name, p->value);
    for (auto& [name, buf] : backend_.buffers()) ck.get(name, *buf);
    if (learnable_frontend()) leaf_params_.for_each_vector([&](const char* name, std::vector<T>& v) { ck.get(std::string("leaf.") + name, v); });
  }

 private:
  nn::Tensor<T> frontend_batch(const std::vector<std::vector<float>>& xs, int jobs, std::vector<typename leaf::LeafFrontend<T>::Cache>* caches) {
    const auto spec = backend_.spec();
    nn::Tensor<T> input(xs.size(), 1, spec.in_bands, spec.in_frames);
    parallel_for(xs.size(), jobs, [&](std::size_t i) {
      FeatureMapT<T> f = caches ? leaf_.forward(xs[i], leaf_params_, &(*caches)[i]) : features(xs[i]);
      if (f.bands != spec.in_bands || f.frames != spec.in_frames) throw DataError("frontend produced an unexpected feature shape");
      std::copy(f.values.begin(), f.values.end(), input.sample(i).begin());
    });
    return input;
  }

  ModelConfig config_;
  MelFrontend mel_;
  leaf::LeafFrontend<T> leaf_;
  nn::Backend<T> backend_;
  leaf::LeafParams<T> leaf_params_;
  leaf::LeafParams<T> leaf_grad_;
};

}  // namespace insectleaf::train
