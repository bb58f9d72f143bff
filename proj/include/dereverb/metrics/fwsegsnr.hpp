// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "dereverb/dsp/fft.hpp"
#include "dereverb/dsp/stft.hpp"
#include "dereverb/dsp/waveform.hpp"

namespace dereverb {

struct FwSegSnrOptions {
  std::size_t frame = 512;  // 32 ms
  std::size_t hop = 128;    // 75% overlap
  double gamma = 0.2;
  double min_db = -10.0;
  double max_db = 35.0;
  double silence_floor_db = -40.0;
};

/// Critical-band layout of the frequency-weighted segmental SNR: 25 Gaussian
/// shaped bands, center frequencies and bandwidths in Hz.
struct CriticalBands {
  static constexpr std::size_t kCount = 25;
  static constexpr std::array<double, kCount> kCenter = {
      50.0,    120.0,   190.0,   260.0,   330.0,   400.0,   470.0,   540.0,   617.372,
      703.378, 798.717, 904.128, 1020.38, 1148.30, 1288.72, 1442.54, 1610.70, 1794.16,
      1993.93, 2211.08, 2446.71, 2701.97, 2978.04, 3276.17, 3597.63};
  static constexpr std::array<double, kCount> kBandwidth = {
      70.0,    70.0,    70.0,    70.0,    70.0,    70.0,    70.0,    77.3724, 86.0056,
      95.3398, 105.411, 116.256, 127.914, 140.423, 153.823, 168.154, 183.457, 199.776,
      217.153, 235.631, 255.255, 276.072, 298.126, 321.465, 346.136};

  /// weights[b][k] over bins 0..n/2-1, zeroed below -30 dB.
  static std::vector<std::vector<double>> filters(std::size_t n_fft, double fs) {
    const std::size_t half = n_fft / 2;
    const double max_freq = fs / 2.0;
    const double min_factor = std::exp(-30.0 / (2.0 * 2.303));
    std::vector<std::vector<double>> f(kCount, std::vector<double>(half, 0.0));
    for (std::size_t b = 0; b < kCount; ++b) {
      const double f0 = kCenter[b] / max_freq * half;
      const double bw = kBandwidth[b] / max_freq * half;
      for (std::size_t k = 0; k < half; ++k) {
        const double v = std::exp(-11.0 * std::pow((static_cast<double>(k) - f0) / bw, 2));
        f[b][k] = v > min_factor ? v : 0.0;
      }
    }
    return f;
  }
};

/// Per-frame values of the frequency-weighted segmental SNR for frames whose
/// reference energy is above the silence floor. Spectra are normalized to unit
/// area per frame before banding, which makes the measure gain-invariant.
inline std::vector<double> fwsegsnr_frames(const Waveform& ref, const Waveform& est,
                                           const FwSegSnrOptions& o = {}) {
  if (ref.size() != est.size()) throw InvalidArgument("fwsegsnr: length mismatch");
  const std::size_t frames = stft_frame_count(ref.size(), o.frame, o.hop);
  if (frames == 0) throw InvalidArgument("fwsegsnr: input too short");
  const auto bands = CriticalBands::filters(o.frame, ref.sample_rate_hz);
  const auto win = periodic_hann(o.frame);
  const auto& plan = fft_plan<double>(o.frame);
  const std::size_t half = o.frame / 2;

  std::vector<double> frame_energy(frames);
  double max_energy = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    double e = 0;
    for (std::size_t i = 0; i < o.frame; ++i) e += ref[t * o.hop + i] * ref[t * o.hop + i];
    frame_energy[t] = e;
    max_energy = std::max(max_energy, e);
  }
  if (max_energy == 0.0) throw InvalidArgument("fwsegsnr: silent reference");
  const double floor = max_energy * std::pow(10.0, o.silence_floor_db / 10.0);

  std::vector<double> out;
  std::vector<std::complex<double>> fr(o.frame), fe(o.frame);
  std::vector<double> mr(half), me(half);
  for (std::size_t t = 0; t < frames; ++t) {
    if (frame_energy[t] < floor) continue;
    for (std::size_t i = 0; i < o.frame; ++i) {
      fr[i] = ref[t * o.hop + i] * win[i];
      fe[i] = est[t * o.hop + i] * win[i];
    }
    plan.forward(fr);
    plan.forward(fe);
    double sr = 0, se = 0;
    for (std::size_t k = 0; k < half; ++k) {
      mr[k] = std::abs(fr[k]);
      me[k] = std::abs(fe[k]);
      sr += mr[k];
      se += me[k];
    }
    for (std::size_t k = 0; k < half; ++k) {
      mr[k] = sr > 0 ? mr[k] / sr : 0.0;
      me[k] = se > 0 ? me[k] / se : 0.0;
    }
    double num = 0, den = 0;
    for (const auto& filt : bands) {
      double rb = 0, eb = 0;
      for (std::size_t k = 0; k < half; ++k) {
        rb += filt[k] * mr[k];
        eb += filt[k] * me[k];
      }
      const double diff = rb - eb;
      double snr = diff == 0.0 ? o.max_db : 10.0 * std::log10(rb * rb / (diff * diff));
      snr = std::clamp(snr, o.min_db, o.max_db);
      const double w = std::pow(rb, o.gamma);
      num += w * snr;
      den += w;
    }
    // Clamp again: a weighted mean of clamped values may exceed the bound by an ulp.
    out.push_back(den > 0 ? std::clamp(num / den, o.min_db, o.max_db) : o.min_db);
  }
  return out;
}

/// Frequency-weighted segmental SNR in dB (mean over non-silent frames).
inline double fwsegsnr(const Waveform& ref, const Waveform& est, const FwSegSnrOptions& o = {}) {
  const auto v = fwsegsnr_frames(ref, est, o);
  if (v.empty()) throw InvalidArgument("fwsegsnr: no frames above the silence floor");
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace dereverb
