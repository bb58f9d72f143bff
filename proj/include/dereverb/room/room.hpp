// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "dereverb/dsp/octave_bands.hpp"
#include "dereverb/error.hpp"
#include "dereverb/random.hpp"

namespace dereverb {

using BandValues = std::array<double, kNumOctaveBands>;

/// Surface material with per-octave energy absorption coefficients.
struct Material {
  std::string name;
  BandValues absorption{};

  /// Pressure reflection coefficient sqrt(1 - alpha) for one band.
  double reflection(std::size_t band) const { return std::sqrt(1.0 - absorption[band]); }

  void validate() const {
    for (double a : absorption)
      if (!(a >= 0.0 && a <= 1.0)) throw InvalidArgument("absorption of " + name + " outside [0, 1]");
  }
};

// Bands: 125, 250, 500, 1k, 2k, 4k, 8k Hz. These are effective coefficients
// for furnished rooms (furniture and occupants folded into the surfaces), so
// they run higher than bare-surface laboratory data.
inline const std::array<Material, 5>& wall_materials() {
  static const std::array<Material, 5> table{{
      {"painted_plaster", {0.22, 0.20, 0.18, 0.18, 0.19, 0.20, 0.20}},
      {"brick", {0.18, 0.19, 0.21, 0.23, 0.25, 0.27, 0.27}},
      {"glass", {0.35, 0.28, 0.22, 0.18, 0.16, 0.15, 0.15}},
      {"wood_paneling", {0.40, 0.34, 0.28, 0.24, 0.22, 0.20, 0.20}},
      {"heavy_curtains", {0.30, 0.38, 0.48, 0.55, 0.60, 0.62, 0.62}},
  }};
  return table;
}

inline const std::array<Material, 4>& floor_materials() {
  static const std::array<Material, 4> table{{
      {"concrete", {0.10, 0.10, 0.12, 0.13, 0.14, 0.15, 0.15}},
      {"ceramic_tile", {0.10, 0.11, 0.12, 0.13, 0.14, 0.14, 0.14}},
      {"thin_carpet", {0.15, 0.20, 0.30, 0.40, 0.45, 0.50, 0.50}},
      {"thick_carpet", {0.20, 0.35, 0.55, 0.65, 0.70, 0.72, 0.72}},
  }};
  return table;
}

inline const std::array<Material, 4>& ceiling_materials() {
  static const std::array<Material, 4> table{{
      {"plaster", {0.15, 0.14, 0.13, 0.13, 0.14, 0.15, 0.15}},
      {"acoustic_tile", {0.45, 0.55, 0.68, 0.78, 0.78, 0.72, 0.72}},
      {"gypsum_board", {0.32, 0.20, 0.14, 0.12, 0.12, 0.13, 0.13}},
      {"wood", {0.28, 0.22, 0.18, 0.16, 0.15, 0.15, 0.15}},
  }};
  return table;
}

struct Vec3 {
  double x = 0, y = 0, z = 0;
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
};

inline double distance(const Vec3& a, const Vec3& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

/// Shoebox room; walls at x = 0, W and y = 0, L; floor at z = 0, ceiling at z = H.
struct RoomSpec {
  double width_m = 5.0;
  double length_m = 6.0;
  double height_m = 2.5;
  Material wall;
  Material floor;
  Material ceiling;
  std::size_t wall_index = 0, floor_index = 0, ceiling_index = 0;
  Vec3 source;
  Vec3 mic;

  static constexpr double kMinWidth = 3.0, kMaxWidth = 7.0;
  static constexpr double kMinLength = 4.0, kMaxLength = 8.0;
  static constexpr double kMinHeight = 2.13, kMaxHeight = 3.05;
  static constexpr double kWallClearance = 0.3;
  static constexpr double kMinSeparation = 0.5;

  Vec3 dims() const { return {width_m, length_m, height_m}; }
  double volume() const { return width_m * length_m * height_m; }

  /// Checks the position constraints only; dimensions may be outside the
  /// sampled ranges for hand-built rooms.
  void validate_positions() const {
    const Vec3 d = dims();
    for (const Vec3* p : {&source, &mic})
      for (int a = 0; a < 3; ++a)
        if ((*p)[a] <= 0.0 || (*p)[a] >= d[a]) throw InvalidArgument("position outside the room");
    wall.validate();
    floor.validate();
    ceiling.validate();
  }
};

/// Draws a room: dimensions uniform in range, materials uniform over the
/// tables, positions uniform with 0.3 m clearance and 0.5 m separation.
inline RoomSpec sample_room(std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  RoomSpec r;
  r.width_m = uniform(rng, RoomSpec::kMinWidth, RoomSpec::kMaxWidth);
  r.length_m = uniform(rng, RoomSpec::kMinLength, RoomSpec::kMaxLength);
  r.height_m = uniform(rng, RoomSpec::kMinHeight, RoomSpec::kMaxHeight);
  r.wall_index = uniform_index(rng, wall_materials().size());
  r.floor_index = uniform_index(rng, floor_materials().size());
  r.ceiling_index = uniform_index(rng, ceiling_materials().size());
  r.wall = wall_materials()[r.wall_index];
  r.floor = floor_materials()[r.floor_index];
  r.ceiling = ceiling_materials()[r.ceiling_index];
  const Vec3 d = r.dims();
  auto draw = [&] {
    Vec3 p;
    for (int a = 0; a < 3; ++a)
      p[a] = uniform(rng, RoomSpec::kWallClearance, d[a] - RoomSpec::kWallClearance);
    return p;
  };
  r.source = draw();
  do {
    r.mic = draw();
  } while (distance(r.source, r.mic) < RoomSpec::kMinSeparation);
  return r;
}

/// Sabine reverberation time per band, 0.161 V / sum(S alpha).
inline BandValues sabine_t60(const RoomSpec& r) {
  BandValues t{};
  const double walls = 2.0 * (r.width_m + r.length_m) * r.height_m;
  const double plan = r.width_m * r.length_m;
  for (std::size_t b = 0; b < kNumOctaveBands; ++b) {
    const double a = walls * r.wall.absorption[b] + plan * (r.floor.absorption[b] + r.ceiling.absorption[b]);
    t[b] = a > 0 ? 0.161 * r.volume() / a : INFINITY;
  }
  return t;
}

}  // namespace dereverb
