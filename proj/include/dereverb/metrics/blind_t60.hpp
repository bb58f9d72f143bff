// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "dereverb/dsp/waveform.hpp"

namespace dereverb {

struct BlindT60Options {
  double frame_s = 0.020;        // envelope window
  double hop_s = 0.005;          // envelope hop
  double min_drop_db = 15.0;     // a free decay must fall at least this far
  double rise_tolerance_db = 3.0;
  double fit_range_db = 30.0;     // decay range used by the fit
  double onset_tolerance_db = 2.0;
  std::size_t min_region_samples = 64;
  double percentile = 0.25;
  double t60_lo = 0.02, t60_hi = 5.0;
};

/// A free-decay region in samples [begin, end).
struct DecayRegion {
  std::size_t begin = 0;
  std::size_t end = 0;
  double drop_db = 0;
};

/// Regions where the short-time level falls by at least min_drop_db from a
/// local maximum without rising more than rise_tolerance_db above its running
/// minimum.
inline std::vector<DecayRegion> find_decay_regions(const Waveform& w, const BlindT60Options& o = {}) {
  const double fs = w.sample_rate_hz;
  const auto frame = static_cast<std::size_t>(o.frame_s * fs);
  const auto hop = static_cast<std::size_t>(o.hop_s * fs);
  std::vector<double> level;
  for (std::size_t s = 0; s + frame <= w.size(); s += hop) {
    double e = 0;
    for (std::size_t i = s; i < s + frame; ++i) e += w[i] * w[i];
    level.push_back(10.0 * std::log10(e / frame + 1e-30));
  }
  std::vector<DecayRegion> out;
  std::size_t i = 0;
  while (i + 1 < level.size()) {
    // Start at a local maximum.
    if (level[i + 1] >= level[i]) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    std::size_t argmin = i;
    std::size_t j = i + 1;
    for (; j < level.size(); ++j) {
      if (level[j] < level[argmin]) argmin = j;
      if (level[j] > level[argmin] + o.rise_tolerance_db) break;
    }
    const double drop = level[start] - level[argmin];
    if (drop >= o.min_drop_db) {
      // A sustained sound ends at the last frame still near its level.
      std::size_t top = start;
      for (std::size_t k = start; k < argmin; ++k)
        if (level[k] >= level[start] - o.onset_tolerance_db) top = k;
      // The offset lies inside the loudest window; start the fit at its last
      // strong sample. Starting late is harmless for an exponential decay.
      const std::size_t w0 = top * hop;
      double peak = 0;
      for (std::size_t k = w0; k < w0 + frame; ++k) peak = std::max(peak, std::abs(w[k]));
      std::size_t onset = w0;
      for (std::size_t k = w0; k < w0 + frame; ++k)
        if (std::abs(w[k]) >= 0.5 * peak) onset = k;
      DecayRegion r;
      r.begin = onset;
      // Stop once the fit range is covered so a noise floor does not flatten the decay.
      std::size_t last = top;
      while (last < argmin && level[last] > level[top] - o.fit_range_db) ++last;
      r.end = std::min(w.size(), last * hop + frame / 2);
      r.drop_db = drop;
      if (r.end >= r.begin + o.min_region_samples) out.push_back(r);
    }
    i = std::max(argmin, start + 1);
  }
  return out;
}

/// Maximum-likelihood T60 for y[n] = sigma a^n v[n], v white Gaussian.
/// Maximizes -N/2 ln(mean(y^2 a^-2n)) - N(N-1)/2 ln a over a log-spaced grid
/// refined by golden-section search.
inline double ml_decay_t60(std::span<const double> y, double fs, double t60_lo = 0.02,
                           double t60_hi = 5.0) {
  const double n = static_cast<double>(y.size());
  std::vector<double> logy2(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) logy2[i] = std::log(y[i] * y[i] + 1e-300);
  auto neg_loglik = [&](double log_t60) {
    const double t60 = std::exp(log_t60);
    const double ln_a = -6.907755278982137 / (t60 * fs);  // amplitude decay per sample
    double mx = -INFINITY;
    for (std::size_t i = 0; i < y.size(); ++i) mx = std::max(mx, logy2[i] - 2.0 * i * ln_a);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += std::exp(logy2[i] - 2.0 * i * ln_a - mx);
    const double log_sigma2 = mx + std::log(s / n);
    return 0.5 * n * log_sigma2 + 0.5 * n * (n - 1) * ln_a;
  };
  const double lo = std::log(t60_lo), hi = std::log(t60_hi);
  constexpr int kGrid = 120;
  int best = 0;
  double best_v = INFINITY;
  for (int g = 0; g <= kGrid; ++g) {
    const double v = neg_loglik(lo + (hi - lo) * g / kGrid);
    if (v < best_v) best_v = v, best = g;
  }
  double a = lo + (hi - lo) * std::max(0, best - 1) / kGrid;
  double b = lo + (hi - lo) * std::min(kGrid, best + 1) / kGrid;
  const double phi = 0.6180339887498949;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = neg_loglik(c), fd = neg_loglik(d);
  for (int it = 0; it < 40; ++it) {
    if (fc < fd) {
      b = d, d = c, fd = fc;
      c = b - phi * (b - a);
      fc = neg_loglik(c);
    } else {
      a = c, c = d, fc = fd;
      d = a + phi * (b - a);
      fd = neg_loglik(d);
    }
  }
  return std::exp(0.5 * (a + b));
}

/// Blind reverberation-time estimate of a reverberant recording: ML decay fits
/// over detected free-decay regions, summarized by their lower quartile.
inline double estimate_t60_blind(const Waveform& w, const BlindT60Options& o = {}) {
  if (w.duration_s() < 1.0) throw InvalidArgument("estimate_t60_blind: need at least 1 s of audio");
  const auto regions = find_decay_regions(w, o);
  if (regions.empty()) throw InvalidArgument("no decay detected");
  std::vector<double> t60s;
  for (const auto& r : regions)
    t60s.push_back(ml_decay_t60(std::span(w.samples).subspan(r.begin, r.end - r.begin),
                                w.sample_rate_hz, o.t60_lo, o.t60_hi));
  std::sort(t60s.begin(), t60s.end());
  const double pos = o.percentile * static_cast<double>(t60s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, t60s.size() - 1);
  return t60s[lo] + (pos - lo) * (t60s[hi] - t60s[lo]);
}

}  // namespace dereverb
