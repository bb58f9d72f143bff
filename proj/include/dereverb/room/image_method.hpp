// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <numbers>
#include <vector>

#include "dereverb/dsp/octave_bands.hpp"
#include "dereverb/room/rir_analysis.hpp"
#include "dereverb/room/room.hpp"

namespace dereverb {

inline constexpr double kSpeedOfSound = 343.0;  // m/s

struct SimulationOptions {
  /// Maximum total reflection count; negative selects a distance horizon
  /// derived from the room's Sabine estimate instead.
  int max_order = -1;
  bool jitter = true;
  double jitter_cube_m = 0.16;
  /// Hard cap on the simulated duration when max_order is adaptive.
  double max_duration_s = 3.0;
  /// Trim the result once its envelope has fallen 60 dB below the peak.
  bool trim = true;
};

/// One image source. Amplitudes already include the 1 / (4 pi d) spreading.
struct ImageSource {
  Vec3 position;
  Vec3 nominal_position;  // before jitter
  int reflections = 0;
  double distance_m = 0;
  std::size_t delay_samples = 0;
  BandValues amplitude{};
  bool direct = false;
};

namespace detail {

// Images along one axis: coordinate (1 - 2u) s + 2 n L reflects |n - u| times
// off the low surface and |n| times off the high surface.
struct AxisImage {
  double coord;
  int low_hits;
  int high_hits;
  BandValues gain;  // product of band reflection coefficients along this axis
};

inline double ipow(double b, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

inline std::vector<AxisImage> axis_images(double src, double mic, double len, int max_order,
                                          double radius, const BandValues& low_r,
                                          const BandValues& high_r) {
  std::vector<AxisImage> out;
  const int n_max = max_order >= 0 ? max_order + 1 : static_cast<int>(radius / (2 * len)) + 2;
  for (int n = -n_max; n <= n_max; ++n) {
    for (int u = 0; u <= 1; ++u) {
      const int lo = std::abs(n - u), hi = std::abs(n);
      if (max_order >= 0 && lo + hi > max_order) continue;
      const double c = (1 - 2 * u) * src + 2.0 * n * len;
      if (std::abs(c - mic) > radius) continue;
      AxisImage img{c, lo, hi, {}};
      for (std::size_t b = 0; b < kNumOctaveBands; ++b)
        img.gain[b] = ipow(low_r[b], lo) * ipow(high_r[b], hi);
      out.push_back(img);
    }
  }
  return out;
}

}  // namespace detail

/// Visits image sources up to `max_order` reflections (or inside the
/// distance `radius_m` when max_order < 0). Each non-direct image is offset by
/// an independent uniform jitter inside a cube of side opts.jitter_cube_m;
/// the direct path is never moved. Enumeration order is fixed, so the result
/// is a pure function of (room, options, seed).
template <class Visitor>
void for_each_image(const RoomSpec& room, const SimulationOptions& opts, std::uint64_t rng_seed,
                    double radius_m, double fs, Visitor&& visit) {
  room.validate_positions();
  if (distance(room.source, room.mic) == 0.0) throw InvalidArgument("source and mic coincide");
  BandValues wall_r{}, floor_r{}, ceil_r{};
  for (std::size_t b = 0; b < kNumOctaveBands; ++b) {
    wall_r[b] = room.wall.reflection(b);
    floor_r[b] = room.floor.reflection(b);
    ceil_r[b] = room.ceiling.reflection(b);
  }
  const Vec3 d = room.dims();
  const auto xs = detail::axis_images(room.source.x, room.mic.x, d.x, opts.max_order, radius_m, wall_r, wall_r);
  const auto ys = detail::axis_images(room.source.y, room.mic.y, d.y, opts.max_order, radius_m, wall_r, wall_r);
  const auto zs = detail::axis_images(room.source.z, room.mic.z, d.z, opts.max_order, radius_m, floor_r, ceil_r);
  Rng rng(rng_seed);
  const double half = opts.jitter_cube_m / 2.0;
  const double r2 = radius_m * radius_m;
  ImageSource img;
  for (const auto& ix : xs) {
    const double dx = ix.coord - room.mic.x;
    for (const auto& iy : ys) {
      const double dy = iy.coord - room.mic.y;
      const int order_xy = ix.low_hits + ix.high_hits + iy.low_hits + iy.high_hits;
      if (opts.max_order >= 0 && order_xy > opts.max_order) continue;
      if (dx * dx + dy * dy > r2) continue;
      for (const auto& iz : zs) {
        const int order = order_xy + iz.low_hits + iz.high_hits;
        if (opts.max_order >= 0 && order > opts.max_order) continue;
        const double dz = iz.coord - room.mic.z;
        if (dx * dx + dy * dy + dz * dz > r2) continue;
        img.nominal_position = {ix.coord, iy.coord, iz.coord};
        img.position = img.nominal_position;
        img.reflections = order;
        img.direct = order == 0;
        if (!img.direct && opts.jitter) {
          img.position.x += uniform(rng, -half, half);
          img.position.y += uniform(rng, -half, half);
          img.position.z += uniform(rng, -half, half);
        }
        img.distance_m = distance(img.position, room.mic);
        img.delay_samples =
            static_cast<std::size_t>(std::lround(img.distance_m / kSpeedOfSound * fs));
        const double spread = 1.0 / (4.0 * std::numbers::pi * img.distance_m);
        for (std::size_t b = 0; b < kNumOctaveBands; ++b)
          img.amplitude[b] = spread * ix.gain[b] * iy.gain[b] * iz.gain[b];
        visit(img);
      }
    }
  }
}

/// All image sources as a list; see for_each_image.
inline std::vector<ImageSource> image_sources(const RoomSpec& room, const SimulationOptions& opts,
                                              std::uint64_t rng_seed, double radius_m = INFINITY,
                                              double fs = kSampleRate) {
  std::vector<ImageSource> out;
  for_each_image(room, opts, rng_seed, radius_m, fs, [&](const ImageSource& img) { out.push_back(img); });
  return out;
}

namespace detail {

// Envelope level of 10 ms frames in dB relative to the loudest frame.
inline std::vector<double> frame_levels_db(const std::vector<double>& h, std::size_t frame) {
  std::vector<double> lv;
  double peak = 0;
  for (std::size_t s = 0; s < h.size(); s += frame) {
    double e = 0;
    for (std::size_t i = s; i < std::min(h.size(), s + frame); ++i) e += h[i] * h[i];
    lv.push_back(e);
    peak = std::max(peak, e);
  }
  for (double& v : lv) v = v > 0 && peak > 0 ? 10 * std::log10(v / peak) : -INFINITY;
  return lv;
}

}  // namespace detail

/// Image-method RIR with frequency-dependent reflections.
///
/// Per image, the band amplitudes are split into their mean, added to a
/// broadband track, and the per-band deviations, added to seven band tracks
/// that are octave-filtered and summed. Images with flat amplitudes (the
/// direct path, or rigid/fully absorbing rooms) therefore stay exact impulses.
inline ImpulseResponse simulate_rir(const RoomSpec& room, const SimulationOptions& opts,
                                    std::uint64_t rng_seed) {
  const double fs = kSampleRate;
  const std::size_t frame = static_cast<std::size_t>(0.01 * fs);
  double horizon_s = 0;
  if (opts.max_order < 0) {
    const auto sab = sabine_t60(room);
    const double t = *std::max_element(sab.begin(), sab.end());
    horizon_s = std::min(opts.max_duration_s, std::max(0.25, 1.2 * t));
  }

  std::vector<double> h;
  for (;;) {
    const double radius = opts.max_order < 0 ? horizon_s * kSpeedOfSound : INFINITY;
    std::size_t len;
    if (opts.max_order < 0) {
      len = static_cast<std::size_t>(horizon_s * fs) + 1;
    } else {
      // Explicit orders: the farthest image bounds the length.
      const Vec3 d = room.dims();
      const double reach = 2.0 * (opts.max_order + 1) * std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z) +
                           opts.jitter_cube_m;
      len = static_cast<std::size_t>(reach / kSpeedOfSound * fs) + 2;
    }
    h.assign(len, 0.0);
    std::vector<std::vector<double>> bands(kNumOctaveBands, std::vector<double>(len, 0.0));
    bool any_band = false;
    std::size_t used = 1;
    for_each_image(room, opts, rng_seed, radius, fs, [&](const ImageSource& img) {
      if (img.delay_samples >= len) return;
      used = std::max(used, img.delay_samples + 1);
      const auto [lo, hi] = std::minmax_element(img.amplitude.begin(), img.amplitude.end());
      if (*lo == *hi) {
        h[img.delay_samples] += *lo;
        return;
      }
      double mean = 0;
      for (double a : img.amplitude) mean += a;
      mean /= kNumOctaveBands;
      h[img.delay_samples] += mean;
      for (std::size_t b = 0; b < kNumOctaveBands; ++b) {
        const double dev = img.amplitude[b] - mean;
        if (dev != 0.0) {
          bands[b][img.delay_samples] += dev;
          any_band = true;
        }
      }
    });
    if (opts.max_order >= 0) {
      len = used;
      h.resize(len);
      for (auto& b : bands) b.resize(len);
    }
    if (any_band) {
      static const OctaveFilterbank bank;
      for (std::size_t b = 0; b < kNumOctaveBands; ++b) {
        const auto y = bank.filter(bands[b], b);
        for (std::size_t i = 0; i < len; ++i) h[i] += y[i];
      }
    }
    if (opts.max_order >= 0 || horizon_s >= opts.max_duration_s) break;
    // The shell of images at the horizon must already sit 60 dB down;
    // otherwise widen the horizon and rebuild.
    const auto lv = detail::frame_levels_db(h, frame);
    const double tail = lv.size() >= 3 ? std::max(lv[lv.size() - 2], lv[lv.size() - 3]) : 0.0;
    if (tail < -60.0) break;
    horizon_s = std::min(opts.max_duration_s, horizon_s * 1.5);
  }

  if (opts.trim) {
    const auto lv = detail::frame_levels_db(h, frame);
    std::size_t last = 0;
    for (std::size_t f = 0; f < lv.size(); ++f)
      if (lv[f] >= -60.0) last = f;
    h.resize(std::min(h.size(), (last + 2) * frame));
  }

  ImpulseResponse ir;
  ir.h = Waveform(std::move(h));
  ir.room = room;
  ir.rng_seed = rng_seed;
  measure(ir);
  return ir;
}

/// Adaptive-horizon simulation with jitter, the corpus default.
inline ImpulseResponse simulate_rir(const RoomSpec& room, std::uint64_t rng_seed) {
  return simulate_rir(room, SimulationOptions{}, rng_seed);
}

inline ImpulseResponse simulate_rir(const RoomSpec& room, int max_order, std::uint64_t rng_seed) {
  SimulationOptions opts;
  opts.max_order = max_order;
  if (max_order < 0) throw InvalidArgument("max_order must be non-negative");
  return simulate_rir(room, opts, rng_seed);
}

}  // namespace dereverb
