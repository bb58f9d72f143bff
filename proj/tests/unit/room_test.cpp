// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>
#include <tuple>

#include "dereverb/room/image_method.hpp"
#include "dereverb/room/rir_corpus.hpp"
#include "support/room_oracle.hpp"
#include "support/signals.hpp"

using namespace dereverb;
using dereverb::testing::exponential_noise_rir;
using dereverb::testing::mirror_enumeration;
using dereverb::testing::OracleImage;

namespace {

Material uniform_material(double alpha) {
  Material m{"test", {}};
  m.absorption.fill(alpha);
  return m;
}

RoomSpec fixed_room() {
  RoomSpec r;
  r.width_m = 4.0;
  r.length_m = 5.5;
  r.height_m = 2.7;
  r.wall = wall_materials()[2];
  r.floor = floor_materials()[2];
  r.ceiling = ceiling_materials()[3];
  r.source = {1.1, 1.7, 1.5};
  r.mic = {2.9, 3.8, 1.2};
  return r;
}

void expect_matches_oracle(const RoomSpec& room, int max_order) {
  SimulationOptions opts;
  opts.max_order = max_order;
  opts.jitter = false;
  const auto images = image_sources(room, opts, 1);
  const auto oracle = mirror_enumeration(room, max_order);
  ASSERT_EQ(images.size(), oracle.size());
  for (const auto& o : oracle) {
    const auto it = std::find_if(images.begin(), images.end(), [&](const ImageSource& s) {
      return distance(s.position, o.pos) < 1e-9;
    });
    ASSERT_NE(it, images.end());
    const double dist = distance(o.pos, room.mic);
    EXPECT_NEAR(it->distance_m, dist, 1e-9);
    EXPECT_EQ(it->delay_samples, static_cast<std::size_t>(std::lround(dist / 343.0 * 16000)));
    for (std::size_t b = 0; b < kNumOctaveBands; ++b) {
      const double amp = std::pow(room.wall.reflection(b), o.wall) *
                         std::pow(room.floor.reflection(b), o.floor) *
                         std::pow(room.ceiling.reflection(b), o.ceiling) /
                         (4 * std::numbers::pi * dist);
      EXPECT_NEAR(it->amplitude[b], amp, 1e-6);
    }
  }
}

}  // namespace

TEST(SampleRoom, DeterministicPerSeed) {
  const auto a = sample_room(42), b = sample_room(42), c = sample_room(43);
  EXPECT_EQ(a.width_m, b.width_m);
  EXPECT_EQ(a.mic.z, b.mic.z);
  EXPECT_EQ(a.wall.name, b.wall.name);
  EXPECT_NE(a.width_m, c.width_m);
}

TEST(SampleRoom, RangesConstraintsAndMaterialCoverage) {
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> combos;
  double wmin = 1e9, wmax = -1e9;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const auto r = sample_room(s);
    wmin = std::min(wmin, r.width_m);
    wmax = std::max(wmax, r.width_m);
    ASSERT_GE(r.length_m, 4.0);
    ASSERT_LE(r.length_m, 8.0);
    ASSERT_GE(r.height_m, 2.13);
    ASSERT_LE(r.height_m, 3.05);
    const Vec3 d = r.dims();
    for (const Vec3* p : {&r.source, &r.mic})
      for (int a = 0; a < 3; ++a) {
        ASSERT_GE((*p)[a], 0.3);
        ASSERT_LE((*p)[a], d[a] - 0.3);
      }
    ASSERT_GE(distance(r.source, r.mic), 0.5);
    combos.insert({r.wall_index, r.floor_index, r.ceiling_index});
  }
  EXPECT_GE(wmin, 3.0);
  EXPECT_LE(wmax, 7.0);
  EXPECT_LT(wmin, 3.01);
  EXPECT_GT(wmax, 6.99);
  EXPECT_EQ(combos.size(), 80u);
}

TEST(Materials, AbsorptionInUnitInterval) {
  for (const auto& m : wall_materials()) EXPECT_NO_THROW(m.validate());
  for (const auto& m : floor_materials()) EXPECT_NO_THROW(m.validate());
  for (const auto& m : ceiling_materials()) EXPECT_NO_THROW(m.validate());
  EXPECT_THROW(uniform_material(1.2).validate(), InvalidArgument);
}

TEST(ImageMethod, FullyAbsorbingRoomLeavesDirectPath) {
  RoomSpec r = fixed_room();
  r.wall = r.floor = r.ceiling = uniform_material(1.0);
  const auto ir = simulate_rir(r, 3, 9);
  const double d = distance(r.source, r.mic);
  const auto delay = static_cast<std::size_t>(std::lround(d / 343.0 * 16000));
  ASSERT_GT(ir.h.size(), delay);
  for (std::size_t i = 0; i < ir.h.size(); ++i) {
    if (i == delay) EXPECT_NEAR(ir.h[i], 1.0 / (4 * std::numbers::pi * d), 1e-6);
    else EXPECT_EQ(ir.h[i], 0.0) << i;
  }
  EXPECT_EQ(ir.drr_db, 100.0);
}

TEST(ImageMethod, FirstOrderHasSevenArrivalsMatchingMirrors) {
  SimulationOptions opts;
  opts.max_order = 1;
  opts.jitter = false;
  const auto images = image_sources(fixed_room(), opts, 3);
  EXPECT_EQ(images.size(), 7u);
  expect_matches_oracle(fixed_room(), 1);
}

TEST(ImageMethod, MatchesMirrorEnumerationOnRandomRooms) {
  for (std::uint64_t s = 0; s < 20; ++s)
    for (int order = 0; order <= 2; ++order) expect_matches_oracle(sample_room(1000 + s), order);
}

TEST(ImageMethod, JitterStaysInsideSixteenCentimetreCube) {
  SimulationOptions opts;
  opts.max_order = 3;
  const auto images = image_sources(fixed_room(), opts, 17);
  std::size_t moved = 0;
  for (const auto& img : images) {
    for (int a = 0; a < 3; ++a) {
      const double off = img.position[a] - img.nominal_position[a];
      EXPECT_LE(std::abs(off), 0.08);
      if (img.direct) EXPECT_EQ(off, 0.0);
      moved += off != 0.0;
    }
  }
  EXPECT_GT(moved, images.size());
}

TEST(ImageMethod, CoincidentSourceAndMicThrows) {
  RoomSpec r = fixed_room();
  r.mic = r.source;
  EXPECT_THROW(simulate_rir(r, 1, 0), InvalidArgument);
}

TEST(ImageMethod, DecaysSixtyDbBeforeEnd) {
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto ir = simulate_rir(sample_room(s), s);
    const std::size_t frame = 160;
    double peak = 0, last = 0;
    for (std::size_t f = 0; f + frame <= ir.h.size(); f += frame) {
      double e = 0;
      for (std::size_t i = f; i < f + frame; ++i) e += ir.h[i] * ir.h[i];
      peak = std::max(peak, e);
      last = e;
    }
    EXPECT_LT(10 * std::log10(last / peak), -60.0);
  }
}

TEST(ImageMethod, MoreAbsorptionNeverLengthensT60) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    RoomSpec r = sample_room(200 + s);
    const auto base = simulate_rir(r, 200 + s);
    for (Material* m : {&r.wall, &r.floor, &r.ceiling})
      for (double& a : m->absorption) a = std::min(1.0, a + 0.1);
    const auto damped = simulate_rir(r, 200 + s);
    EXPECT_LE(damped.t60_s, base.t60_s);
  }
}

TEST(ImageMethod, DeterministicPerSeed) {
  const auto a = simulate_rir(fixed_room(), 5);
  const auto b = simulate_rir(fixed_room(), 5);
  EXPECT_EQ(a.h.samples, b.h.samples);
}

TEST(RirT60, RecoversExponentialDecay) {
  for (double t60 : {0.3, 0.5, 0.8, 1.2}) {
    const double alpha = 6.9078 / t60;
    const auto h = exponential_noise_rir(alpha, 2.5 * t60, 11);
    EXPECT_NEAR(rir_t60(h), t60, 0.05 * t60);
  }
  EXPECT_NEAR(rir_t60(exponential_noise_rir(13.8155, 1.5, 2)), 0.5, 0.025);
  EXPECT_NEAR(rir_t60(exponential_noise_rir(5.7565, 3.0, 3)), 1.2, 0.06);
}

TEST(RirT60, ScaleInvariant) {
  auto h = exponential_noise_rir(10.0, 2.0, 4);
  const double t = rir_t60(h);
  for (auto& v : h.samples) v *= 0.1;
  EXPECT_NEAR(rir_t60(h), t, 1e-9);
}

TEST(RirT60, ShortResponseHasInsufficientDecay) {
  EXPECT_THROW(rir_t60(Waveform({1.0})), InsufficientDecay);
  EXPECT_THROW(rir_t60(Waveform::zeros(10)), InvalidArgument);
}

TEST(RirDrr, ClosedFormCases) {
  Waveform single = Waveform::zeros(1000);
  single[50] = 1.0;
  EXPECT_EQ(rir_drr(single), 100.0);

  Waveform equal = Waveform::zeros(2000);
  equal[100] = 1.0;
  equal[900] = -1.0;
  EXPECT_NEAR(rir_drr(equal), 0.0, 1e-12);

  Waveform two = Waveform::zeros(2000);
  two[100] = 1.0;
  two[600] = 1.0 / std::sqrt(10.0);
  EXPECT_NEAR(rir_drr(two), 10.0, 0.01);
}

TEST(EarlyReverbTarget, ZeroesEverythingTwentyMsAfterPeak) {
  ImpulseResponse ir;
  ir.h = exponential_noise_rir(8.0, 0.5, 5);
  for (std::size_t i = 0; i < 100; ++i) ir.h[i] = 0.0;
  ir.h[100] = 50.0;
  const auto e = early_reverb_target(ir);
  ASSERT_EQ(e.h.size(), ir.h.size());
  for (std::size_t i = 0; i < 420; ++i) EXPECT_EQ(e.h[i], ir.h[i]);
  for (std::size_t i = 420; i < e.h.size(); ++i) EXPECT_EQ(e.h[i], 0.0);
  EXPECT_LE(energy(e.h.samples), energy(ir.h.samples));
}

TEST(EarlyReverbTarget, ShortResponseUnchanged) {
  ImpulseResponse ir;
  ir.h = Waveform({0.1, 1.0, 0.5, 0.2});
  EXPECT_EQ(early_reverb_target(ir).h.samples, ir.h.samples);
}

TEST(EarlyReverbTarget, SimulatedTargetsAreShort) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto e = early_reverb_target(simulate_rir(sample_room(s), s));
    if (std::isfinite(e.t60_s)) EXPECT_LE(e.t60_s, 0.1);
  }
}

TEST(RirCorpus, FiltersByT60AndIsDeterministic) {
  const auto a = build_rir_corpus(6, 0.4, 77);
  ASSERT_EQ(a.size(), 6u);
  for (const auto& ir : a) EXPECT_GE(ir.t60_s, 0.4);
  CorpusOptions par;
  par.workers = 3;
  const auto b = build_rir_corpus(6, 0.4, 77, par);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].rng_seed, b[i].rng_seed);
    EXPECT_EQ(a[i].h.samples, b[i].h.samples);
  }
}

TEST(RirCorpus, AbortsWhenNothingPasses) {
  CorpusOptions opts;
  opts.abort_window = 10;
  EXPECT_THROW(build_rir_corpus(2, 50.0, 1, opts), CorpusAbort);
  EXPECT_THROW(build_rir_corpus(0, 0.4, 1), InvalidArgument);
}

TEST(RirCorpus, DiskRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "dereverb_rir_corpus_test";
  std::filesystem::remove_all(dir);
  const auto corpus = build_rir_corpus(2, 0.4, 5);
  write_rir_corpus(dir, corpus);
  const auto entries = read_rir_manifest(dir);
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[1].seed, corpus[1].rng_seed);
  EXPECT_TRUE(std::filesystem::exists(dir / "rir_000001.json"));
  const auto loaded = load_rir_corpus(dir);
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_NEAR(loaded[0].t60_s, corpus[0].t60_s, 1e-3);
  std::filesystem::remove_all(dir);
}
