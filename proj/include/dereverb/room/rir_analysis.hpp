// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "dereverb/dsp/waveform.hpp"
#include "dereverb/room/room.hpp"

namespace dereverb {

class InsufficientDecay : public InvalidArgument {
 public:
  InsufficientDecay() : InvalidArgument("insufficient decay") {}
};

/// Simulated room impulse response. t60_s and drr_db are always measured from h.
struct ImpulseResponse {
  Waveform h;
  double t60_s = std::numeric_limits<double>::quiet_NaN();
  double drr_db = std::numeric_limits<double>::quiet_NaN();
  RoomSpec room;
  std::uint64_t rng_seed = 0;
};

/// Index of the first sample with the largest magnitude.
inline std::size_t peak_index(const Waveform& h) {
  std::size_t best = 0;
  double m = -1.0;
  for (std::size_t i = 0; i < h.size(); ++i)
    if (std::abs(h[i]) > m) m = std::abs(h[i]), best = i;
  return best;
}

/// Schroeder backward-integrated energy decay curve in dB relative to the
/// total energy. Zero-energy tails map to -infinity.
inline std::vector<double> energy_decay_curve_db(const Waveform& h) {
  std::vector<double> edc(h.size());
  double acc = 0.0;
  for (std::size_t i = h.size(); i-- > 0;) {
    acc += h[i] * h[i];
    edc[i] = acc;
  }
  const double total = acc;
  for (double& v : edc) v = v > 0 ? 10.0 * std::log10(v / total) : -INFINITY;
  return edc;
}

/// Reverberation time from the -5 dB to -25 dB span of the decay curve,
/// extrapolated to 60 dB (T60 = 3 T20).
inline double rir_t60(const Waveform& h) {
  if (peak_abs(h.samples) == 0.0) throw InvalidArgument("rir is all zeros");
  const auto edc = energy_decay_curve_db(h);
  const double fs = h.sample_rate_hz;
  double n = 0, st = 0, sy = 0, stt = 0, sty = 0;
  bool reached_end = false;
  for (std::size_t i = 0; i < edc.size(); ++i) {
    if (edc[i] < -25.0) {
      reached_end = true;
      break;
    }
    if (edc[i] <= -5.0) {
      const double t = i / fs;
      n += 1;
      st += t;
      sy += edc[i];
      stt += t * t;
      sty += t * edc[i];
    }
  }
  if (!reached_end || n < 2) throw InsufficientDecay();
  const double slope = (n * sty - st * sy) / (n * stt - st * st);  // dB per second
  if (!(slope < 0)) throw InsufficientDecay();
  return -60.0 / slope;
}

/// Direct-to-reverberant ratio with a +-2.5 ms direct-path window around the peak.
inline double rir_drr(const Waveform& h) {
  constexpr double kCapDb = 100.0;
  const std::size_t p = peak_index(h);
  const auto half = static_cast<std::size_t>(std::lround(0.0025 * h.sample_rate_hz));
  double direct = 0, late = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const std::size_t d = i > p ? i - p : p - i;
    (d <= half ? direct : late) += h[i] * h[i];
  }
  if (direct == 0.0) throw InvalidArgument("rir is all zeros");
  if (late == 0.0) return kCapDb;
  return std::min(kCapDb, 10.0 * std::log10(direct / late));
}

/// Fills in the measured T60 (NaN when the decay is too short to measure) and DRR.
inline void measure(ImpulseResponse& ir) {
  try {
    ir.t60_s = rir_t60(ir.h);
  } catch (const InsufficientDecay&) {
    ir.t60_s = std::numeric_limits<double>::quiet_NaN();
  }
  ir.drr_db = rir_drr(ir.h);
}

/// Keeps the response up to 20 ms after its peak and zeroes the rest.
inline ImpulseResponse early_reverb_target(const ImpulseResponse& rir) {
  ImpulseResponse out = rir;
  const std::size_t cut =
      peak_index(rir.h) + static_cast<std::size_t>(std::lround(0.020 * rir.h.sample_rate_hz));
  for (std::size_t i = cut; i < out.h.size(); ++i) out.h[i] = 0.0;
  measure(out);
  return out;
}

}  // namespace dereverb
