// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "dereverb/dsp/waveform.hpp"

namespace dereverb {

inline constexpr std::size_t kSdrFilterTaps = 512;

/// Target component of `est`: its least-squares projection onto the span of
/// `ref` delayed by 0..taps-1 samples. Both signals are zero-padded by
/// taps - 1 samples, so the result has length T + taps - 1.
inline std::vector<double> sdr_target_component(const Waveform& ref, const Waveform& est,
                                                std::size_t taps = kSdrFilterTaps) {
  const std::size_t t = ref.size();
  // Autocorrelation of ref and cross-correlation with est, lags 0..taps-1.
  Eigen::VectorXd r(taps), b(taps);
  for (std::size_t k = 0; k < taps; ++k) {
    double acc = 0, cross = 0;
    for (std::size_t n = k; n < t; ++n) {
      acc += ref[n] * ref[n - k];
      cross += est[n] * ref[n - k];
    }
    r[k] = acc;
    b[k] = cross;
  }
  Eigen::MatrixXd gram(taps, taps);
  for (std::size_t i = 0; i < taps; ++i)
    for (std::size_t j = 0; j < taps; ++j) gram(i, j) = r[i > j ? i - j : j - i];
  // A tiny ridge keeps rank-deficient (e.g. band-limited) references solvable.
  gram.diagonal().array() += 1e-12 * r[0];
  const Eigen::VectorXd c = gram.ldlt().solve(b);
  std::vector<double> target(t + taps - 1, 0.0);
  for (std::size_t k = 0; k < taps; ++k) {
    if (c[k] == 0.0) continue;
    for (std::size_t n = 0; n < t; ++n) target[n + k] += c[k] * ref[n];
  }
  return target;
}

/// Signal-to-distortion ratio allowing a 512-tap distortion filter, capped at +100 dB.
inline double sdr(const Waveform& ref, const Waveform& est) {
  constexpr double kCapDb = 100.0;
  if (ref.size() != est.size()) throw InvalidArgument("sdr: length mismatch");
  if (ref.size() < 4096) throw InvalidArgument("sdr: signals shorter than 4096 samples");
  if (energy(ref.samples) == 0.0) throw InvalidArgument("sdr: silent reference");
  const auto target = sdr_target_component(ref, est);
  double num = 0, den = 0;
  for (std::size_t n = 0; n < target.size(); ++n) {
    const double e = (n < est.size() ? est[n] : 0.0) - target[n];
    num += target[n] * target[n];
    den += e * e;
  }
  if (den <= num * 1e-10) return kCapDb;
  return std::min(kCapDb, 10.0 * std::log10(num / den));
}

}  // namespace dereverb
