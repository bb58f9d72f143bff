// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>

#include "dereverb/dsp/stft.hpp"
#include "dereverb/metrics/blind_t60.hpp"

namespace dereverb {

using WaveformTransform = std::function<Waveform(const Waveform&)>;

struct DrynessOptions {
  double window_s = 3.0;
  double stride_s = 1.0;
  double theta_window = 2.0;               // minimum per-window output/residual std ratio
  double theta_logmean = std::log(4.0);    // minimum mean log ratio
};

struct DrynessResult {
  bool accepted = false;
  double min_ratio = 0;
  double mean_log_ratio = 0;
  std::size_t windows = 0;
  std::string reason;  // empty when accepted
};

namespace detail {
inline double centered_std(std::span<const double> x) {
  double m = 0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size()));
}
}  // namespace detail

/// Rates how dry a recording is from what an enhancer removes: per rolling
/// window, rho = std(enhanced) / std(residual). Rejects when the smallest rho
/// falls below theta_window or the mean log rho below theta_logmean. Windows
/// where both parts are silent are skipped.
inline DrynessResult dryness_filter(const Waveform& w, const WaveformTransform& enhancer,
                                    const DrynessOptions& o = {}) {
  const std::size_t win = static_cast<std::size_t>(std::lround(o.window_s * w.sample_rate_hz));
  const std::size_t stride = static_cast<std::size_t>(std::lround(o.stride_s * w.sample_rate_hz));
  if (win == 0 || stride == 0) throw InvalidArgument("dryness_filter: window and stride must be positive");
  if (w.size() < win) throw InvalidArgument("dryness_filter: input shorter than one window");
  const Waveform e = enhancer(w);
  if (e.size() != w.size()) throw InvalidArgument("dryness_filter: enhancer changed the signal length");
  std::vector<double> r(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) r[i] = w[i] - e[i];

  DrynessResult res;
  res.min_ratio = std::numeric_limits<double>::infinity();
  double log_sum = 0;
  for (std::size_t s = 0; s + win <= w.size(); s += stride) {
    const double se = detail::centered_std(std::span<const double>(e.samples).subspan(s, win));
    const double sr = detail::centered_std(std::span<const double>(r).subspan(s, win));
    if (se == 0 && sr == 0) continue;
    const double rho = sr == 0 ? std::numeric_limits<double>::infinity() : se / sr;
    res.min_ratio = std::min(res.min_ratio, rho);
    log_sum += std::log(rho);
    ++res.windows;
  }
  if (res.windows == 0) {
    res.reason = "silent";
    res.min_ratio = 0;
    return res;
  }
  res.mean_log_ratio = log_sum / static_cast<double>(res.windows);
  if (res.min_ratio < o.theta_window)
    res.reason = "window ratio " + std::to_string(res.min_ratio) + " below " + std::to_string(o.theta_window);
  else if (res.mean_log_ratio < o.theta_logmean)
    res.reason = "mean log ratio " + std::to_string(res.mean_log_ratio) + " below " + std::to_string(o.theta_logmean);
  res.accepted = res.reason.empty();
  return res;
}

/// Stage-0 enhancer used before any trained model exists: late-reverberation
/// spectral subtraction driven by the blind decay-rate estimate. The late
/// power at frame t is the smoothed power `delay_s` earlier attenuated by the
/// exponential decay implied by the T60 estimate.
struct EnergyDecayOptions {
  double delay_s = 0.05;
  double smoothing = 0.5;
  double overestimate = 2.0;  // late-power multiplier
  double gain_floor = 0.1;  // amplitude
  double min_t60_s = 0.05;
  double max_t60_s = 2.0;
};

inline Waveform energy_decay_enhancer(const Waveform& w, const EnergyDecayOptions& o = {}) {
  if (w.size() < kStftWindow) throw InvalidArgument("input too short");
  double t60 = o.min_t60_s;
  if (w.duration_s() >= 1.0) {
    try {
      t60 = estimate_t60_blind(w);
    } catch (const InvalidArgument&) {
      t60 = o.min_t60_s;  // no free decay found: treat as dry
    }
  }
  t60 = std::clamp(t60, o.min_t60_s, o.max_t60_s);

  const std::size_t hop = kStftHop;
  const std::size_t padded = (w.size() + 3 * hop - 1) / hop * hop;
  Waveform x = Waveform::zeros(padded, w.sample_rate_hz);
  std::copy(w.samples.begin(), w.samples.end(), x.samples.begin() + hop);
  auto s = stft(x);
  const std::size_t delay = std::max<std::size_t>(1, std::lround(o.delay_s * w.sample_rate_hz / hop));
  const double decay = std::exp(-2.0 * 3.0 * std::numbers::ln10 * (delay * hop / double(w.sample_rate_hz)) / t60);
  const double floor2 = o.gain_floor * o.gain_floor;
  std::vector<double> smoothed(s.frames * s.bins, 0.0);
  for (std::size_t t = 0; t < s.frames; ++t)
    for (std::size_t k = 0; k < s.bins; ++k) {
      const std::size_t i = t * s.bins + k;
      const double p = s.real_part[i] * s.real_part[i] + s.imag_part[i] * s.imag_part[i];
      smoothed[i] = (t ? o.smoothing * smoothed[i - s.bins] : 0.0) + (1 - o.smoothing) * p;
      const double late = t >= delay ? o.overestimate * decay * smoothed[i - delay * s.bins] : 0.0;
      const double g = p > 0 ? std::sqrt(std::max(1.0 - late / p, floor2)) : 1.0;
      s.real_part[i] *= g;
      s.imag_part[i] *= g;
    }
  const auto y = istft(s);
  Waveform out = Waveform::zeros(w.size(), w.sample_rate_hz);
  std::copy_n(y.samples.begin() + hop, w.size(), out.samples.begin());
  return out;
}

}  // namespace dereverb
