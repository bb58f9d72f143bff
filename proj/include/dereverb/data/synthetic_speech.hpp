// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "dereverb/dsp/waveform.hpp"
#include "dereverb/random.hpp"

namespace dereverb {

/// Speech-like test material: voiced syllables (glottal pulse train through
/// three formant resonators), occasional fricative bursts, and silent gaps.
/// Offsets are abrupt so reverberant tails are exposed.
struct SyntheticSpeechOptions {
  double min_syllable_s = 0.08, max_syllable_s = 0.30;
  double min_gap_s = 0.06, max_gap_s = 0.35;
  double fricative_probability = 0.25;
  double noise_floor = 1e-4;  // relative to peak 1
};

namespace detail {

struct Resonator {
  double a1 = 0, a2 = 0, gain = 1;
  double y1 = 0, y2 = 0;
  Resonator(double freq, double bw, double fs) {
    const double r = std::exp(-std::numbers::pi * bw / fs);
    a1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq / fs);
    a2 = -r * r;
    gain = 1.0 - r;
  }
  double operator()(double x) {
    const double y = gain * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace detail

inline Waveform synthetic_speech(double seconds, std::uint64_t seed,
                                 const SyntheticSpeechOptions& o = {}) {
  constexpr double fs = kSampleRate;
  Rng rng(mix_seed(seed));
  const auto n = static_cast<std::size_t>(seconds * fs);
  std::vector<double> x(n, 0.0);
  // Speaker traits fixed per clip.
  const double f0_base = uniform(rng, 90.0, 240.0);
  const double formant_scale = uniform(rng, 0.9, 1.15);
  constexpr std::array<std::array<double, 3>, 6> kVowels = {{{730, 1090, 2440},
                                                             {270, 2290, 3010},
                                                             {300, 870, 2240},
                                                             {530, 1840, 2480},
                                                             {570, 840, 2410},
                                                             {660, 1720, 2410}}};

  std::size_t pos = static_cast<std::size_t>(uniform(rng, 0.02, 0.15) * fs);
  while (pos < n) {
    const auto len = static_cast<std::size_t>(uniform(rng, o.min_syllable_s, o.max_syllable_s) * fs);
    const auto& v = kVowels[uniform_index(rng, kVowels.size())];
    std::array<detail::Resonator, 3> formants = {
        detail::Resonator(v[0] * formant_scale, 80, fs),
        detail::Resonator(v[1] * formant_scale, 100, fs),
        detail::Resonator(v[2] * formant_scale, 140, fs)};
    const double f0_start = f0_base * uniform(rng, 0.85, 1.15);
    const double f0_end = f0_start * uniform(rng, 0.8, 1.1);
    const double level = uniform(rng, 0.4, 1.0);
    const bool fricative = uniform(rng, 0.0, 1.0) < o.fricative_probability;
    detail::Resonator hiss(uniform(rng, 3500.0, 6000.0), 1500, fs);
    const std::size_t attack = static_cast<std::size_t>(0.015 * fs);
    const std::size_t release = static_cast<std::size_t>(0.008 * fs);
    double phase = 0;
    for (std::size_t i = 0; i < len && pos + i < n; ++i) {
      const double frac = static_cast<double>(i) / len;
      const double f0 = f0_start + (f0_end - f0_start) * frac;
      phase += f0 / fs;
      double src = 0;
      if (phase >= 1.0) {
        phase -= 1.0;
        src = 1.0;
      }
      src += 0.02 * standard_normal(rng);
      double s = formants[0](src) + 0.6 * formants[1](src) + 0.3 * formants[2](src);
      if (fricative) s = 0.4 * s + 1.5 * hiss(standard_normal(rng));
      double env = 1.0;
      if (i < attack) env = static_cast<double>(i) / attack;
      if (len - i < release) env = static_cast<double>(len - i) / release;
      x[pos + i] += level * env * s;
    }
    pos += len + static_cast<std::size_t>(uniform(rng, o.min_gap_s, o.max_gap_s) * fs);
  }
  const double peak = peak_abs(x);
  for (auto& s : x) {
    if (peak > 0) s /= peak;
    s += o.noise_floor * standard_normal(rng);
  }
  const double p2 = peak_abs(x);
  for (auto& s : x) s /= p2;
  return Waveform(std::move(x));
}

}  // namespace dereverb
