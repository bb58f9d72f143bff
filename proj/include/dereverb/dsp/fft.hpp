// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

#include "dereverb/error.hpp"

namespace dereverb {

/// In-place iterative radix-2 FFT for a fixed power-of-two length.
template <class T>
class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n), twiddle_(n / 2), bitrev_(n) {
    if (n == 0 || !std::has_single_bit(n))
      throw InvalidArgument("FFT length must be a power of two");
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / n;
      twiddle_[k] = {static_cast<T>(std::cos(a)), static_cast<T>(std::sin(a))};
    }
    const int bits = std::countr_zero(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (int b = 0; b < bits; ++b)
        if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
      bitrev_[i] = r;
    }
  }

  std::size_t size() const { return n_; }

  /// Forward transform, X[k] = sum_n x[n] e^{-2 pi i k n / N}.
  void forward(std::span<std::complex<T>> data) const { run(data, false); }

  /// Unnormalized inverse, x[n] = sum_k X[k] e^{+2 pi i k n / N}.
  void inverse_unscaled(std::span<std::complex<T>> data) const { run(data, true); }

 private:
  void run(std::span<std::complex<T>> a, bool inverse) const {
    if (a.size() != n_) throw InvalidArgument("FFT buffer has wrong length");
    for (std::size_t i = 0; i < n_; ++i)
      if (i < bitrev_[i]) std::swap(a[i], a[bitrev_[i]]);
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t step = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t j = 0; j < half; ++j) {
          std::complex<T> w = twiddle_[j * step];
          if (inverse) w = std::conj(w);
          const std::complex<T> u = a[start + j];
          const std::complex<T> v = a[start + j + half] * w;
          a[start + j] = u + v;
          a[start + j + half] = u - v;
        }
      }
    }
  }

  std::size_t n_;
  std::vector<std::complex<T>> twiddle_;
  std::vector<std::size_t> bitrev_;
};

/// Shared, lazily built plans keyed by length.
template <class T>
const FftPlan<T>& fft_plan(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<FftPlan<T>>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<FftPlan<T>>(n);
  return *slot;
}

inline std::size_t next_pow2(std::size_t n) { return std::bit_ceil(std::max<std::size_t>(n, 1)); }

}  // namespace dereverb
