// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dereverb/error.hpp"

namespace dereverb {

/// Every toolkit path runs at this rate; other rates are rejected at ingestion.
inline constexpr int kSampleRate = 16000;

/// Mono audio. Samples are nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = kSampleRate;

  Waveform() = default;
  explicit Waveform(std::vector<double> s, int rate = kSampleRate)
      : samples(std::move(s)), sample_rate_hz(rate) {}
  static Waveform zeros(std::size_t n, int rate = kSampleRate) {
    return Waveform(std::vector<double>(n, 0.0), rate);
  }

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double operator[](std::size_t i) const { return samples[i]; }
  double& operator[](std::size_t i) { return samples[i]; }
  std::span<const double> view() const { return samples; }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

/// Throws unless every sample is finite and the rate is the toolkit rate.
inline void validate(const Waveform& w) {
  if (w.sample_rate_hz != kSampleRate)
    throw InvalidArgument("unsupported sample rate " +
                          std::to_string(w.sample_rate_hz) + " Hz (need 16000)");
  for (double s : w.samples)
    if (!std::isfinite(s)) throw InvalidArgument("waveform has non-finite sample");
}

inline double peak_abs(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

inline double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

struct NormalizeResult {
  Waveform waveform;
  bool was_silent = false;  // input was all zeros and is returned unchanged
};

/// Scales `w` so that its largest absolute sample is exactly 1.
inline NormalizeResult peak_normalize(const Waveform& w) {
  const double peak = peak_abs(w.samples);
  if (peak == 0.0) return {w, true};
  NormalizeResult r{w, false};
  for (double& s : r.waveform.samples) s /= peak;
  return r;
}

}  // namespace dereverb
