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

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <mutex>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <vector>

namespace insectleaf {

namespace detail {

// FFTW's planner is not thread-safe; plan creation and destruction go
// through this lock. Execution is reentrant.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

template <typename T>
struct FftwApi;

template <>
struct FftwApi<double> {
  using plan = fftw_plan;
  using complex = fftw_complex;
  static void* malloc(std::size_t bytes) { return fftw_malloc(bytes); }
  static void free(void* p) { fftw_free(p); }
  static plan dft(int n, complex* in, complex* out, int sign) {
    return fftw_plan_dft_1d(n, in, out, sign, FFTW_ESTIMATE);
  }
  static plan r2c(int n, double* in, complex* out) { return fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE); }
  static plan c2r(int n, complex* in, double* out) { return fftw_plan_dft_c2r_1d(n, in, out, FFTW_ESTIMATE); }
  static void execute(plan p) { fftw_execute(p); }
  static void destroy(plan p) { fftw_destroy_plan(p); }
};

template <>
struct FftwApi<float> {
  using plan = fftwf_plan;
  using complex = fftwf_complex;
  static void* malloc(std::size_t bytes) { return fftwf_malloc(bytes); }
  static void free(void* p) { fftwf_free(p); }
  static plan dft(int n, complex* in, complex* out, int sign) {
    return fftwf_plan_dft_1d(n, in, out, sign, FFTW_ESTIMATE);
  }
  static plan r2c(int n, float* in, complex* out) { return fftwf_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE); }
  static plan c2r(int n, complex* in, float* out) { return fftwf_plan_dft_c2r_1d(n, in, out, FFTW_ESTIMATE); }
  static void execute(plan p) { fftwf_execute(p); }
  static void destroy(plan p) { fftwf_destroy_plan(p); }
};

template <typename T>
struct ScalarOf {
  using type = T;
};
template <typename T>
struct ScalarOf<std::complex<T>> {
  using type = T;
};

/// SIMD-aligned storage from the FFTW allocator.
template <typename T>
class FftwBuffer {
  using Api = FftwApi<typename ScalarOf<T>::type>;

 public:
  explicit FftwBuffer(std::size_t n) : n_(n), data_(static_cast<T*>(Api::malloc(sizeof(T) * (n ? n : 1)))) {
    if (!data_) throw std::bad_alloc();
    for (std::size_t i = 0; i < n_; ++i) data_[i] = T{};
  }
  ~FftwBuffer() { Api::free(data_); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;

  T* data() noexcept { return data_; }
  const T* data() const noexcept { return data_; }
  std::size_t size() const noexcept { return n_; }

 private:
  std::size_t n_;
  T* data_;
};

}  // namespace detail

/// In-place complex FFT of a fixed size. Both directions are unnormalized
/// (FFTW convention): backward(forward(x)) == n * x.
///
/// Plans use FFTW_ESTIMATE so that the algorithm, and therefore the rounding,
/// is the same on every run.
template <typename T>
class ComplexFft {
  static_assert(std::is_floating_point_v<T>);
  using Api = detail::FftwApi<T>;

 public:
  using value_type = std::complex<T>;

  explicit ComplexFft(std::size_t n) : n_(n), buffer_(n) {
    if (n == 0) throw std::invalid_argument("ComplexFft: size must be positive");
    auto* raw = reinterpret_cast<typename Api::complex*>(buffer_.data());
    std::lock_guard lock(detail::fftw_planner_mutex());
    forward_ = Api::dft(static_cast<int>(n), raw, raw, FFTW_FORWARD);
    backward_ = Api::dft(static_cast<int>(n), raw, raw, FFTW_BACKWARD);
  }
  ~ComplexFft() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    Api::destroy(forward_);
    Api::destroy(backward_);
  }
  ComplexFft(const ComplexFft&) = delete;
  ComplexFft& operator=(const ComplexFft&) = delete;

  std::size_t size() const noexcept { return n_; }
  std::span<value_type> buffer() noexcept { return {buffer_.data(), n_}; }

  void forward() { Api::execute(forward_); }
  void backward() { Api::execute(backward_); }

 private:
  std::size_t n_;
  detail::FftwBuffer<value_type> buffer_;
  typename Api::plan forward_;
  typename Api::plan backward_;
};

/// Real-input FFT of size n with n/2 + 1 complex bins. Unnormalized.
template <typename T>
class RealFft {
  static_assert(std::is_floating_point_v<T>);
  using Api = detail::FftwApi<T>;

 public:
  explicit RealFft(std::size_t n) : n_(n), real_(n), spectrum_(n / 2 + 1) {
    if (n == 0) throw std::invalid_argument("RealFft: size must be positive");
    auto* spec = reinterpret_cast<typename Api::complex*>(spectrum_.data());
    std::lock_guard lock(detail::fftw_planner_mutex());
    // r2c/c2r plans are out-of-place between the two owned buffers.
    forward_ = Api::r2c(static_cast<int>(n), real_data(), spec);
    backward_ = Api::c2r(static_cast<int>(n), spec, real_data());
  }
  ~RealFft() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    Api::destroy(forward_);
    Api::destroy(backward_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const noexcept { return n_; }
  std::size_t bins() const noexcept { return n_ / 2 + 1; }
  std::span<T> signal() noexcept { return {real_data(), n_}; }
  std::span<std::complex<T>> spectrum() noexcept { return {spectrum_.data(), bins()}; }

  /// signal() -> spectrum()
  void forward() { Api::execute(forward_); }
  /// spectrum() -> signal(); destroys the contents of spectrum().
  void backward() { Api::execute(backward_); }

 private:
  T* real_data() noexcept { return real_.data(); }

  std::size_t n_;
  detail::FftwBuffer<T> real_;
  detail::FftwBuffer<std::complex<T>> spectrum_;
  typename Api::plan forward_;
  typename Api::plan backward_;
};

/// Power spectrum |X[k]|^2 of a real signal, k = 0..n/2, zero-padded to
/// `fft_size` (defaults to the signal length).
template <typename T>
std::vector<double> power_spectrum(std::span<const T> signal, std::size_t fft_size = 0) {
  if (fft_size == 0) fft_size = signal.size();
  RealFft<double> fft(fft_size);
  auto in = fft.signal();
  for (std::size_t i = 0; i < fft_size; ++i) in[i] = i < signal.size() ? static_cast<double>(signal[i]) : 0.0;
  fft.forward();
  std::vector<double> out(fft.bins());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::norm(fft.spectrum()[k]);
  return out;
}

/// Smallest power of two >= n.
inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Full linear convolution of two real sequences via FFT.
template <typename T>
std::vector<T> fft_convolve(std::span<const T> a, std::span<const T> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t out_len = a.size() + b.size() - 1;
  const std::size_t n = next_pow2(out_len);
  RealFft<double> fa(n), fb(n);
  for (std::size_t i = 0; i < n; ++i) {
    fa.signal()[i] = i < a.size() ? static_cast<double>(a[i]) : 0.0;
    fb.signal()[i] = i < b.size() ? static_cast<double>(b[i]) : 0.0;
  }
  fa.forward();
  fb.forward();
  for (std::size_t k = 0; k < fa.bins(); ++k) fa.spectrum()[k] *= fb.spectrum()[k];
  fa.backward();
  std::vector<T> out(out_len);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = static_cast<T>(fa.signal()[i] * scale);
  return out;
}

}  // namespace insectleaf
