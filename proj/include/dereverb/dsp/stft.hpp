// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include "dereverb/dsp/waveform.hpp"

namespace dereverb {

inline constexpr std::size_t kStftWindow = 320;  // 20 ms
inline constexpr std::size_t kStftHop = 160;     // 10 ms
inline constexpr std::size_t kStftBins = kStftWindow / 2 + 1;

/// Periodic Hann window: w[n] = 0.5 (1 - cos(2 pi n / N)).
template <class T = double>
std::vector<T> periodic_hann(std::size_t n) {
  std::vector<T> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = static_cast<T>(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n));
  return w;
}

/// Window-premultiplied real DFT basis for an N-point transform.
/// cos_[n * bins + k] = w[n] cos(2 pi k n / N), sin_ likewise with -sin.
template <class T>
struct DftBasis {
  std::size_t n = 0;
  std::size_t bins = 0;
  std::vector<T> window;
  std::vector<T> cos_;
  std::vector<T> sin_;

  explicit DftBasis(std::size_t len) : n(len), bins(len / 2 + 1), window(periodic_hann<T>(len)) {
    cos_.resize(n * bins);
    sin_.resize(n * bins);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < bins; ++k) {
        // Reduce the phase index mod N before scaling to keep the argument small.
        const double a = 2.0 * std::numbers::pi * static_cast<double>((k * i) % n) / n;
        cos_[i * bins + k] = static_cast<T>(static_cast<double>(window[i]) * std::cos(a));
        sin_[i * bins + k] = static_cast<T>(-static_cast<double>(window[i]) * std::sin(a));
      }
    }
  }
};

template <class T>
const DftBasis<T>& dft_basis(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<DftBasis<T>>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<DftBasis<T>>(n);
  return *slot;
}

/// Real/imaginary STFT planes, frames x bins, row-major.
struct ComplexSpectrogram {
  std::size_t frames = 0;
  std::size_t bins = kStftBins;
  std::vector<double> real_part;
  std::vector<double> imag_part;
  std::size_t window_samples = kStftWindow;
  std::size_t hop_samples = kStftHop;

  double re(std::size_t t, std::size_t k) const { return real_part[t * bins + k]; }
  double im(std::size_t t, std::size_t k) const { return imag_part[t * bins + k]; }
};

inline std::size_t stft_frame_count(std::size_t length, std::size_t window = kStftWindow,
                                    std::size_t hop = kStftHop) {
  if (length < window) return 0;
  return (length - window) / hop + 1;
}

/// Hann-windowed STFT, frames starting at sample 0 with no padding.
inline ComplexSpectrogram stft(const Waveform& w, std::size_t window = kStftWindow,
                               std::size_t hop = kStftHop) {
  if (w.size() < window) throw InvalidArgument("input too short");
  const auto& basis = dft_basis<double>(window);
  ComplexSpectrogram s;
  s.window_samples = window;
  s.hop_samples = hop;
  s.bins = basis.bins;
  s.frames = stft_frame_count(w.size(), window, hop);
  s.real_part.assign(s.frames * s.bins, 0.0);
  s.imag_part.assign(s.frames * s.bins, 0.0);
  for (std::size_t t = 0; t < s.frames; ++t) {
    double* re = &s.real_part[t * s.bins];
    double* im = &s.imag_part[t * s.bins];
    const double* x = &w.samples[t * hop];
    for (std::size_t n = 0; n < window; ++n) {
      const double v = x[n];
      if (v == 0.0) continue;
      const double* c = &basis.cos_[n * s.bins];
      const double* sn = &basis.sin_[n * s.bins];
      for (std::size_t k = 0; k < s.bins; ++k) {
        re[k] += v * c[k];
        im[k] += v * sn[k];
      }
    }
  }
  return s;
}

/// Overlap-add inverse without a synthesis window. With the periodic Hann
/// analysis window at 50% overlap the frames sum to the input exactly on the
/// interior; the first and last half window carry the window taper.
inline Waveform istft(const ComplexSpectrogram& s) {
  if (s.bins != s.window_samples / 2 + 1 || s.real_part.size() != s.frames * s.bins ||
      s.imag_part.size() != s.frames * s.bins)
    throw InvalidArgument("malformed spectrogram");
  const std::size_t n = s.window_samples;
  if (s.frames == 0) return Waveform{};
  Waveform out = Waveform::zeros((s.frames - 1) * s.hop_samples + n);
  // Unwindowed inverse basis: x[i] = (1/N) sum_k c_k (re_k cos - im_k sin).
  std::vector<double> icos(n * s.bins), isin(n * s.bins);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < s.bins; ++k) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>((k * i) % n) / n;
      const double scale = (k == 0 || 2 * k == n) ? 1.0 / n : 2.0 / n;
      icos[i * s.bins + k] = scale * std::cos(a);
      isin[i * s.bins + k] = -scale * std::sin(a);
    }
  }
  for (std::size_t t = 0; t < s.frames; ++t) {
    const double* re = &s.real_part[t * s.bins];
    const double* im = &s.imag_part[t * s.bins];
    double* y = &out.samples[t * s.hop_samples];
    for (std::size_t i = 0; i < n; ++i) {
      const double* c = &icos[i * s.bins];
      const double* sn = &isin[i * s.bins];
      double acc = 0.0;
      for (std::size_t k = 0; k < s.bins; ++k) acc += re[k] * c[k] + im[k] * sn[k];
      y[i] += acc;
    }
  }
  return out;
}

}  // namespace dereverb
