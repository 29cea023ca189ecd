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

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "insectleaf/rng.hpp"

namespace insectleaf::nn {

enum class Mode { kTrain, kEval };

/// SIMD-aligned storage for every buffer that reaches an Eigen kernel, so
/// the vectorised and scalar paths split the same way on every run.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

/// Dense NCHW activation batch.
template <typename T>
struct Tensor {
  std::size_t n = 0, c = 0, h = 0, w = 0;
  AlignedVector<T> data;

  Tensor() = default;
  Tensor(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_, T fill = T{})
      : n(n_), c(c_), h(h_), w(w_), data(n_ * c_ * h_ * w_, fill) {}

  std::size_t plane() const { return h * w; }
  std::size_t sample_size() const { return c * h * w; }
  std::span<T> sample(std::size_t i) { return {data.data() + i * sample_size(), sample_size()}; }
  std::span<const T> sample(std::size_t i) const { return {data.data() + i * sample_size(), sample_size()}; }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

/// A learnable tensor and its gradient accumulator.
template <typename T>
struct Parameter {
  std::string name;
  AlignedVector<T> value;
  AlignedVector<T> grad;
  bool decay = true;

  Parameter() = default;
  Parameter(std::string n, std::size_t size, bool wd = true) : name(std::move(n)), value(size), grad(size), decay(wd) {}
  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T{}); }
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

inline std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < kernel) throw std::invalid_argument("convolution input smaller than kernel");
  return (in + 2 * pad - kernel) / stride + 1;
}

/// Square-kernel 2-D convolution, lowered to a GEMM over im2col patches.
template <typename T>
class Conv2d {
 public:
  Conv2d(std::string name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride, std::size_t pad)
      : weight(name + ".weight", out_ch * in_ch * kernel * kernel),
        bias(name + ".bias", out_ch),
        in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(pad) {}

  std::size_t in_channels() const { return in_ch_; }
  std::size_t out_channels() const { return out_ch_; }
  std::size_t patch_size() const { return in_ch_ * kernel_ * kernel_; }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and bias.
  void reset(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(patch_size()));
    for (auto& v : weight.value) v = static_cast<T>(rng.uniform(-bound, bound));
    for (auto& v : bias.value) v = static_cast<T>(rng.uniform(-bound, bound));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.c != in_ch_) throw std::invalid_argument(weight.name + ": expected " + std::to_string(in_ch_) + " input channels, got " + std::to_string(x.c));
    in_h_ = x.h;
    in_w_ = x.w;
    out_h_ = conv_out_size(x.h, kernel_, stride_, pad_);
    out_w_ = conv_out_size(x.w, kernel_, stride_, pad_);
    const std::size_t P = out_h_ * out_w_, K = patch_size();
    Tensor<T> y(x.n, out_ch_, out_h_, out_w_);
    cols_.resize(x.n * K * P);
    ConstMatrixMap<T> W(weight.value.data(), static_cast<Eigen::Index>(out_ch_), static_cast<Eigen::Index>(K));
    for (std::size_t i = 0; i < x.n; ++i) {
      T* cols = cols_.data() + i * K * P;
      im2col(x.sample(i), cols);
      ConstMatrixMap<T> C(cols, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
      MatrixMap<T> Y(y.sample(i).data(), static_cast<Eigen::Index>(out_ch_), static_cast<Eigen::Index>(P));
      Y.noalias() = W * C;
      for (std::size_t o = 0; o < out_ch_; ++o) Y.row(static_cast<Eigen::Index>(o)).array() += bias.value[o];
    }
    return y;
  }

  /// Accumulates weight/bias gradients; returns dL/dx when requested.
  Tensor<T> backward(const Tensor<T>& dy, bool need_input_grad) {
    const std::size_t P = out_h_ * out_w_, K = patch_size();
    if (dy.c != out_ch_ || dy.h != out_h_ || dy.w != out_w_ || cols_.size() != dy.n * K * P)
      throw std::logic_error(weight.name + ": backward without matching forward");
    MatrixMap<T> dW(weight.grad.data(), static_cast<Eigen::Index>(out_ch_), static_cast<Eigen::Index>(K));
    ConstMatrixMap<T> W(weight.value.data(), static_cast<Eigen::Index>(out_ch_), static_cast<Eigen::Index>(K));
    Tensor<T> dx;
    if (need_input_grad) dx = Tensor<T>(dy.n, in_ch_, in_h_, in_w_);
    RowMatrix<T> dcols;
    for (std::size_t i = 0; i < dy.n; ++i) {
      ConstMatrixMap<T> C(cols_.data() + i * K * P, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
      ConstMatrixMap<T> dY(dy.sample(i).data(), static_cast<Eigen::Index>(out_ch_), static_cast<Eigen::Index>(P));
      dW.noalias() += dY * C.transpose();
      for (std::size_t o = 0; o < out_ch_; ++o) bias.grad[o] += dY.row(static_cast<Eigen::Index>(o)).sum();
      if (need_input_grad) {
        dcols.noalias() = W.transpose() * dY;
        col2im(dcols.data(), dx.sample(i));
      }
    }
    return dx;
  }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  void im2col(std::span<const T> x, T* cols) const {
    const std::size_t P = out_h_ * out_w_;
    for (std::size_t ci = 0; ci < in_ch_; ++ci)
      for (std::size_t ky = 0; ky < kernel_; ++ky)
        for (std::size_t kx = 0; kx < kernel_; ++kx) {
          T* row = cols + ((ci * kernel_ + ky) * kernel_ + kx) * P;
          for (std::size_t oy = 0; oy < out_h_; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(pad_);
            T* dst = row + oy * out_w_;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h_)) {
              std::fill(dst, dst + out_w_, T{});
              continue;
            }
            const T* src = x.data() + (ci * in_h_ + static_cast<std::size_t>(iy)) * in_w_;
            for (std::size_t ox = 0; ox < out_w_; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) - static_cast<std::ptrdiff_t>(pad_);
              dst[ox] = (ix >= 0 && ix < static_cast<std::ptrdiff_t>(in_w_)) ? src[ix] : T{};
            }
          }
        }
  }

  void col2im(const T* cols, std::span<T> dx) const {
    const std::size_t P = out_h_ * out_w_;
    for (std::size_t ci = 0; ci < in_ch_; ++ci)
      for (std::size_t ky = 0; ky < kernel_; ++ky)
        for (std::size_t kx = 0; kx < kernel_; ++kx) {
          const T* row = cols + ((ci * kernel_ + ky) * kernel_ + kx) * P;
          for (std::size_t oy = 0; oy < out_h_; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(pad_);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h_)) continue;
            T* dst = dx.data() + (ci * in_h_ + static_cast<std::size_t>(iy)) * in_w_;
            for (std::size_t ox = 0; ox < out_w_; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) - static_cast<std::ptrdiff_t>(pad_);
              if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(in_w_)) dst[ix] += row[oy * out_w_ + ox];
            }
          }
        }
  }

  std::size_t in_ch_, out_ch_, kernel_, stride_, pad_;
  std::size_t in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
  AlignedVector<T> cols_;
};

template <typename T>
class Relu {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (auto& v : y.data) v = v > T{} ? v : T{};
    mask_ = y;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) const {
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.data.size(); ++i)
      if (!(mask_.data[i] > T{})) dx.data[i] = T{};
    return dx;
  }

 private:
  Tensor<T> mask_;
};

/// Per-channel batch normalisation. Training mode normalises with batch
/// statistics and updates running estimates (unbiased variance); evaluation
/// mode uses the running estimates.
template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d(std::string name, std::size_t channels, double momentum = 0.1, double eps = 1e-5)
      : scale(name + ".weight", channels), shift(name + ".bias", channels),
        running_mean(channels, T{}), running_var(channels, T(1)), momentum_(momentum), eps_(eps) {
    reset();
  }

  void reset() {
    std::fill(scale.value.begin(), scale.value.end(), T(1));
    std::fill(shift.value.begin(), shift.value.end(), T{});
    std::fill(running_mean.begin(), running_mean.end(), T{});
    std::fill(running_var.begin(), running_var.end(), T(1));
  }

  std::size_t channels() const { return scale.size(); }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (x.c != channels()) throw std::invalid_argument(scale.name + ": channel mismatch");
    mode_ = mode;
    const std::size_t plane = x.plane(), count = x.n * plane;
    Tensor<T> y(x.n, x.c, x.h, x.w);
    xhat_ = Tensor<T>(x.n, x.c, x.h, x.w);
    inv_std_.assign(x.c, T{});
    for (std::size_t ch = 0; ch < x.c; ++ch) {
      double mean, var;
      if (mode == Mode::kTrain) {
        if (count < 2) throw std::invalid_argument(scale.name + ": training-mode statistics need more than one value per channel");
        double s = 0.0;
        for (std::size_t i = 0; i < x.n; ++i) {
          const T* p = x.data.data() + (i * x.c + ch) * plane;
          for (std::size_t k = 0; k < plane; ++k) s += p[k];
        }
        mean = s / static_cast<double>(count);
        double ss = 0.0;
        for (std::size_t i = 0; i < x.n; ++i) {
          const T* p = x.data.data() + (i * x.c + ch) * plane;
          for (std::size_t k = 0; k < plane; ++k) ss += (p[k] - mean) * (p[k] - mean);
        }
        var = ss / static_cast<double>(count);
        const double unbiased = ss / static_cast<double>(count - 1);
        running_mean[ch] = static_cast<T>((1.0 - momentum_) * running_mean[ch] + momentum_ * mean);
        running_var[ch] = static_cast<T>((1.0 - momentum_) * running_var[ch] + momentum_ * unbiased);
      } else {
        mean = running_mean[ch];
        var = running_var[ch];
      }
      const double inv = 1.0 / std::sqrt(var + eps_);
      inv_std_[ch] = static_cast<T>(inv);
      const T g = scale.value[ch], b = shift.value[ch];
      for (std::size_t i = 0; i < x.n; ++i) {
        const std::size_t off = (i * x.c + ch) * plane;
        for (std::size_t k = 0; k < plane; ++k) {
          const T xh = static_cast<T>((x.data[off + k] - mean) * inv);
          xhat_.data[off + k] = xh;
          y.data[off + k] = g * xh + b;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    if (!dy.same_shape(xhat_)) throw std::logic_error(scale.name + ": backward without matching forward");
    const std::size_t plane = dy.plane(), count = dy.n * plane;
    Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
    for (std::size_t ch = 0; ch < dy.c; ++ch) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t i = 0; i < dy.n; ++i) {
        const std::size_t off = (i * dy.c + ch) * plane;
        for (std::size_t k = 0; k < plane; ++k) {
          sum_dy += dy.data[off + k];
          sum_dy_xhat += static_cast<double>(dy.data[off + k]) * xhat_.data[off + k];
        }
      }
      scale.grad[ch] += static_cast<T>(sum_dy_xhat);
      shift.grad[ch] += static_cast<T>(sum_dy);
      const double g = scale.value[ch], inv = inv_std_[ch];
      const double m = static_cast<double>(count);
      for (std::size_t i = 0; i < dy.n; ++i) {
        const std::size_t off = (i * dy.c + ch) * plane;
        for (std::size_t k = 0; k < plane; ++k) {
          if (mode_ == Mode::kTrain)
            dx.data[off + k] = static_cast<T>(g * inv / m * (m * dy.data[off + k] - sum_dy - xhat_.data[off + k] * sum_dy_xhat));
          else
            dx.data[off + k] = static_cast<T>(g * inv * dy.data[off + k]);
        }
      }
    }
    return dx;
  }

  Parameter<T> scale;
  Parameter<T> shift;
  AlignedVector<T> running_mean;
  AlignedVector<T> running_var;

 private:
  double momentum_, eps_;
  Mode mode_ = Mode::kEval;
  Tensor<T> xhat_;
  AlignedVector<T> inv_std_;
};

/// Mean over the spatial plane: (n, c, h, w) -> (n, c, 1, 1).
template <typename T>
class GlobalAvgPool {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    h_ = x.h;
    w_ = x.w;
    Tensor<T> y(x.n, x.c, 1, 1);
    const std::size_t plane = x.plane();
    for (std::size_t i = 0; i < x.n * x.c; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < plane; ++k) s += x.data[i * plane + k];
      y.data[i] = static_cast<T>(s / static_cast<double>(plane));
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) const {
    Tensor<T> dx(dy.n, dy.c, h_, w_);
    const std::size_t plane = h_ * w_;
    const T inv = T(1) / static_cast<T>(plane);
    for (std::size_t i = 0; i < dy.n * dy.c; ++i) std::fill_n(dx.data.begin() + static_cast<std::ptrdiff_t>(i * plane), plane, dy.data[i] * inv);
    return dx;
  }

 private:
  std::size_t h_ = 0, w_ = 0;
};

/// Inverted dropout; identity in evaluation mode.
template <typename T>
class Dropout {
 public:
  explicit Dropout(double rate) : rate_(rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  }
  double rate() const { return rate_; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) {
    mask_.assign(x.data.size(), T(1));
    if (mode == Mode::kTrain && rate_ > 0.0) {
      if (!rng) throw std::invalid_argument("dropout in training mode needs a random source");
      const T keep = static_cast<T>(1.0 / (1.0 - rate_));
      for (auto& m : mask_) m = rng->bernoulli(rate_) ? T{} : keep;
    }
    Tensor<T> y = x;
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] *= mask_[i];
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) const {
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= mask_[i];
    return dx;
  }

 private:
  double rate_;
  AlignedVector<T> mask_;
};

/// Fully connected layer over the flattened per-example features.
template <typename T>
class Linear {
 public:
  Linear(std::string name, std::size_t in, std::size_t out)
      : weight(name + ".weight", out * in), bias(name + ".bias", out), in_(in), out_(out) {}

  void reset(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
    for (auto& v : weight.value) v = static_cast<T>(rng.uniform(-bound, bound));
    for (auto& v : bias.value) v = static_cast<T>(rng.uniform(-bound, bound));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.sample_size() != in_) throw std::invalid_argument(weight.name + ": expected " + std::to_string(in_) + " features");
    input_ = x;
    Tensor<T> y(x.n, out_, 1, 1);
    ConstMatrixMap<T> X(x.data.data(), static_cast<Eigen::Index>(x.n), static_cast<Eigen::Index>(in_));
    ConstMatrixMap<T> W(weight.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    MatrixMap<T> Y(y.data.data(), static_cast<Eigen::Index>(x.n), static_cast<Eigen::Index>(out_));
    Y.noalias() = X * W.transpose();
    for (std::size_t i = 0; i < x.n; ++i)
      for (std::size_t o = 0; o < out_; ++o) y.data[i * out_ + o] += bias.value[o];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    ConstMatrixMap<T> X(input_.data.data(), static_cast<Eigen::Index>(input_.n), static_cast<Eigen::Index>(in_));
    ConstMatrixMap<T> W(weight.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    ConstMatrixMap<T> dY(dy.data.data(), static_cast<Eigen::Index>(dy.n), static_cast<Eigen::Index>(out_));
    MatrixMap<T> dW(weight.grad.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    dW.noalias() += dY.transpose() * X;
    for (std::size_t i = 0; i < dy.n; ++i)
      for (std::size_t o = 0; o < out_; ++o) bias.grad[o] += dy.data[i * out_ + o];
    Tensor<T> dx(input_.n, input_.c, input_.h, input_.w);
    MatrixMap<T> dX(dx.data.data(), static_cast<Eigen::Index>(dx.n), static_cast<Eigen::Index>(in_));
    dX.noalias() = dY * W;
    return dx;
  }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  std::size_t in_, out_;
  Tensor<T> input_;
};

struct LossResult {
  double loss = 0.0;     // batch mean
  std::size_t correct = 0;
};

/// Index of the largest value; ties resolve to the lowest index.
template <typename T>
std::size_t argmax(std::span<const T> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

/// Mean softmax cross-entropy over the batch. Writes d loss / d logits
/// into `grad` when it is non-null.
template <typename T>
LossResult softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> labels, Tensor<T>* grad = nullptr) {
  const std::size_t n = logits.n, k = logits.sample_size();
  if (labels.size() != n) throw std::invalid_argument("label count does not match batch size");
  if (grad) *grad = Tensor<T>(logits.n, logits.c, logits.h, logits.w);
  LossResult r;
  std::vector<double> prob(k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = logits.sample(i);
    if (labels[i] >= k) throw std::invalid_argument("label out of range");
    double mx = row[0];
    for (const auto v : row) mx = std::max(mx, static_cast<double>(v));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (prob[j] = std::exp(row[j] - mx));
    r.loss += std::log(z) + mx - row[labels[i]];
    if (argmax(row) == labels[i]) ++r.correct;
    if (grad) {
      auto g = grad->sample(i);
      for (std::size_t j = 0; j < k; ++j) g[j] = static_cast<T>((prob[j] / z - (j == labels[i] ? 1.0 : 0.0)) / static_cast<double>(n));
    }
  }
  r.loss /= static_cast<double>(n);
  return r;
}

}  // namespace insectleaf::nn
