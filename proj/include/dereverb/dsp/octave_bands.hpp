// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "dereverb/dsp/waveform.hpp"

namespace dereverb {

inline constexpr std::size_t kNumOctaveBands = 7;
inline constexpr std::array<double, kNumOctaveBands> kOctaveCenters = {
    125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0};

/// Direct-form-I biquad section.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

  // Second-order Butterworth sections, bilinear transform with prewarping.
  static Biquad butter_lowpass(double fc, double fs) {
    const double k = std::tan(std::numbers::pi * fc / fs);
    const double q = std::numbers::sqrt2 / 2.0;
    const double norm = 1.0 / (1.0 + k / q + k * k);
    Biquad s;
    s.b0 = k * k * norm;
    s.b1 = 2.0 * s.b0;
    s.b2 = s.b0;
    s.a1 = 2.0 * (k * k - 1.0) * norm;
    s.a2 = (1.0 - k / q + k * k) * norm;
    return s;
  }
  static Biquad butter_highpass(double fc, double fs) {
    Biquad s = butter_lowpass(fc, fs);
    const double k = std::tan(std::numbers::pi * fc / fs);
    const double q = std::numbers::sqrt2 / 2.0;
    const double norm = 1.0 / (1.0 + k / q + k * k);
    s.b0 = norm;
    s.b1 = -2.0 * norm;
    s.b2 = norm;
    return s;
  }

  void run(std::vector<double>& x, bool reverse) const {
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    const std::size_t n = x.size();
    for (std::size_t j = 0; j < n; ++j) {
      double& v = x[reverse ? n - 1 - j : j];
      const double y = b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = v;
      y2 = y1;
      y1 = y;
      v = y;
    }
  }
};

/// Seven octave bands built as a zero-phase complementary crossover tree.
///
/// Each split uses a second-order Butterworth low/high pair applied forward
/// and backward, so the two halves have squared magnitudes |L|^2 + |H|^2 = 1
/// (a fourth-order Linkwitz-Riley split without its phase). Band 0 is
/// HP0 * LP1, band b is HP0 * HP1..HPb * LP(b+1), band 6 is HP0 * HP1..HP6.
/// The bands therefore sum to the zero-phase 62.5 Hz high-pass HP0, which is
/// within 1 dB of unity from 100 Hz to Nyquist and rejects DC.
class OctaveFilterbank {
 public:
  static constexpr double kLowCut = 62.5;
  static constexpr std::size_t kPad = 4096;

  explicit OctaveFilterbank(double fs = kSampleRate) : fs_(fs) {
    for (std::size_t b = 0; b + 1 < kNumOctaveBands; ++b) {
      const double fc = kOctaveCenters[b] * std::numbers::sqrt2;  // geometric midpoint
      low_[b] = Biquad::butter_lowpass(fc, fs);
      high_[b] = Biquad::butter_highpass(fc, fs);
    }
    dc_block_ = Biquad::butter_highpass(kLowCut, fs);
  }

  /// Crossover frequency between band b and b + 1.
  static double crossover(std::size_t b) { return kOctaveCenters[b] * std::numbers::sqrt2; }

  std::vector<double> filter(std::span<const double> x, std::size_t band) const {
    if (band >= kNumOctaveBands) throw InvalidArgument("octave band index out of range");
    std::vector<double> buf(x.size() + 2 * kPad, 0.0);
    std::copy(x.begin(), x.end(), buf.begin() + kPad);
    std::vector<const Biquad*> chain{&dc_block_};
    for (std::size_t j = 0; j < band; ++j) chain.push_back(&high_[j]);
    if (band + 1 < kNumOctaveBands) chain.push_back(&low_[band]);
    for (const Biquad* s : chain) s->run(buf, false);
    for (const Biquad* s : chain) s->run(buf, true);
    return {buf.begin() + kPad, buf.begin() + kPad + static_cast<std::ptrdiff_t>(x.size())};
  }

 private:
  double fs_;
  std::array<Biquad, kNumOctaveBands - 1> low_{};
  std::array<Biquad, kNumOctaveBands - 1> high_{};
  Biquad dc_block_{};
};

/// Zero-phase octave band-pass of `w`; band_index selects the center
/// frequency from {125, 250, 500, 1000, 2000, 4000, 8000} Hz.
inline Waveform octave_band_filter(const Waveform& w, int band_index) {
  if (band_index < 0 || band_index >= static_cast<int>(kNumOctaveBands))
    throw InvalidArgument("octave band index out of range");
  static const OctaveFilterbank bank;
  if (w.sample_rate_hz != kSampleRate) throw InvalidArgument("unsupported sample rate");
  return Waveform(bank.filter(w.samples, static_cast<std::size_t>(band_index)), w.sample_rate_hz);
}

}  // namespace dereverb
