// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "dereverb/data/dataset.hpp"
#include "dereverb/data/examples.hpp"
#include "dereverb/data/synthetic_speech.hpp"
#include "dereverb/room/rir_corpus.hpp"
#include "support/signals.hpp"

using namespace dereverb;

namespace {

ClipRecord make_clip(const std::string& utt, std::uint64_t seed) {
  auto clips = segment_clips(synthetic_speech(3.0, seed), utt);
  return clips.at(0);
}

// Utterance ids that hash to the requested half.
std::vector<std::string> ids_in_half(Half h, std::size_t n, const std::string& prefix) {
  std::vector<std::string> out;
  for (std::size_t i = 0; out.size() < n; ++i) {
    const std::string id = prefix + std::to_string(i);
    if (assign_half(id) == h) out.push_back(id);
  }
  return out;
}

ImpulseResponse delta_rir() {
  ImpulseResponse r;
  r.h = Waveform({1.0});
  return r;
}

const std::vector<ImpulseResponse>& test_rirs() {
  static const auto rirs = build_rir_corpus(20, 0.4, 3);
  return rirs;
}

std::vector<ClipRecord> mixed_clips(std::size_t per_half) {
  std::vector<ClipRecord> clips;
  std::uint64_t seed = 0;
  for (Half h : {Half::A, Half::B})
    for (const auto& id : ids_in_half(h, per_half, "utt"))
      for (auto& c : segment_clips(synthetic_speech(6.0, 500 + seed++), id)) clips.push_back(std::move(c));
  return clips;
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("dereverb_data_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST(SegmentClips, CountsAndLengths) {
  EXPECT_EQ(segment_clips(Waveform::zeros(160000), "u").size(), 3u);
  EXPECT_EQ(segment_clips(Waveform::zeros(46400), "u").size(), 0u);
  const auto one = segment_clips(dereverb::testing::white_noise(48000, 1), "u");
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].waveform.size(), 48000u);
  EXPECT_EQ(one[0].clip_id, "u_000");
}

TEST(SegmentClips, ClipsAreConsecutiveAndInheritTheHalf) {
  const auto w = dereverb::testing::white_noise(160000, 2);
  const auto clips = segment_clips(w, "speaker7-utt3");
  for (std::size_t k = 0; k < clips.size(); ++k) {
    EXPECT_EQ(clips[k].half, assign_half("speaker7-utt3"));
    EXPECT_EQ(clips[k].source_utterance, "speaker7-utt3");
    for (std::size_t i = 0; i < kClipSamples; i += 997) EXPECT_EQ(clips[k].waveform[i], w[k * kClipSamples + i]);
  }
}

TEST(AssignHalves, DeterministicAndBalanced) {
  std::vector<std::string> ids;
  for (int i = 0; i < 10000; ++i) ids.push_back("utterance-" + std::to_string(i));
  const auto a = assign_halves(ids), b = assign_halves(ids);
  EXPECT_EQ(a, b);
  std::size_t n_a = 0;
  for (const auto& [id, h] : a) n_a += h == Half::A;
  EXPECT_NEAR(n_a / 10000.0, 0.5, 0.02);
  EXPECT_EQ(half_from_string(to_string(Half::B)), Half::B);
  EXPECT_THROW(half_from_string("C"), InvalidArgument);
}

TEST(DrynessFilter, IdentityEnhancerAccepts) {
  const auto w = synthetic_speech(5.0, 1);
  const auto r = dryness_filter(w, [](const Waveform& x) { return x; });
  EXPECT_TRUE(r.accepted);
  EXPECT_TRUE(std::isinf(r.min_ratio));
  EXPECT_EQ(r.windows, 3u);
}

TEST(DrynessFilter, HalvingOneWindowRejects) {
  const auto w = synthetic_speech(6.0, 2);
  auto halve_first_window = [](const Waveform& x) {
    Waveform e = x;
    for (std::size_t i = 0; i < kClipSamples; ++i) e[i] *= 0.5;
    return e;
  };
  const auto r = dryness_filter(w, halve_first_window);
  EXPECT_FALSE(r.accepted);
  // Window 0: e = w/2 and r = w/2 exactly, so rho = 1.
  EXPECT_NEAR(r.min_ratio, 1.0, 1e-12);
  EXPECT_NE(r.reason.find("window ratio"), std::string::npos);
}

TEST(DrynessFilter, Preconditions) {
  const auto w = synthetic_speech(4.0, 3);
  EXPECT_THROW(dryness_filter(w, [](const Waveform& x) { return Waveform::zeros(x.size() - 1); }),
               InvalidArgument);
  EXPECT_THROW(dryness_filter(synthetic_speech(2.0, 3), [](const Waveform& x) { return x; }), InvalidArgument);
  const auto silent = dryness_filter(Waveform::zeros(64000), [](const Waveform& x) { return x; });
  EXPECT_FALSE(silent.accepted);
  EXPECT_EQ(silent.reason, "silent");
}

TEST(DrynessFilter, EnergyDecayStageZeroSeparatesCleanFromReverberant) {
  const auto& rirs = test_rirs();
  std::size_t rejected_clean = 0, rejected_reverb = 0;
  const std::size_t n = 20;
  for (std::size_t i = 0; i < n; ++i) {
    const auto dry = synthetic_speech(6.0, 900 + i);
    auto rev = convolve_range(dry, rirs[i].h, 0, dry.size());
    auto enhance = [](const Waveform& x) { return energy_decay_enhancer(x); };
    rejected_clean += !dryness_filter(dry, enhance).accepted;
    rejected_reverb += !dryness_filter(rev, enhance).accepted;
  }
  const double rejection_rate = double(rejected_clean + rejected_reverb) / (2 * n);
  EXPECT_GE(rejection_rate, 0.4);
  EXPECT_LE(rejection_rate, 0.6);
  EXPECT_GE(rejected_reverb, 18u);  // at least 90% of reverberated clips
}

TEST(EnergyDecayEnhancer, PreservesLengthAndIsStable) {
  const auto w = synthetic_speech(2.5, 4);
  const auto e = energy_decay_enhancer(w);
  ASSERT_EQ(e.size(), w.size());
  double err = 0, ref = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    err += (e[i] - w[i]) * (e[i] - w[i]);
    ref += w[i] * w[i];
  }
  EXPECT_LT(err, 0.01 * ref);  // dry speech passes nearly untouched
  EXPECT_THROW(energy_decay_enhancer(Waveform::zeros(100)), InvalidArgument);
}

TEST(MakeExample, DeltaRirPairedInputEqualsTarget) {
  const auto clip = make_clip("a", 1);
  ExampleOptions unit_gain;
  unit_gain.gain_lo = unit_gain.gain_hi = 1.0;
  const auto ex = make_paired_example(clip, delta_rir(), 7, unit_gain);
  ASSERT_TRUE(ex.paired_target.has_value());
  EXPECT_EQ(ex.x_r.samples, ex.paired_target->samples);
  const double peak = peak_abs(clip.waveform.samples);
  for (std::size_t i = 0; i < ex.x_r.size(); ++i) ASSERT_EQ(ex.x_r[i], clip.waveform[ex.offset_r + i] / peak);

  const auto scaled = make_paired_example(clip, delta_rir(), 8);
  EXPECT_EQ(scaled.x_r.samples, scaled.paired_target->samples);
}

TEST(MakeExample, GainsStayInRangeAndCropsHaveFixedLength) {
  const auto clip = make_clip("b", 2);
  const auto rir = delta_rir();
  const auto early = early_reverb_target(rir);
  double lo = 1e9, hi = -1e9;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto ex = make_paired_example(clip, rir, s, {}, &early);
    ASSERT_EQ(ex.x_r.size(), 8192u);
    ASSERT_EQ(ex.paired_target->size(), 8192u);
    lo = std::min(lo, ex.gain_r);
    hi = std::max(hi, ex.gain_r);
  }
  EXPECT_GE(lo, 0.3);
  EXPECT_LE(hi, 1.0);
  EXPECT_LT(lo, 0.32);
  EXPECT_GT(hi, 0.98);
}

TEST(MakeExample, ReverberantSideIsTruncatedConvolution) {
  const auto clip = make_clip("c", 3);
  const auto& rir = test_rirs()[1];
  ExampleOptions o;
  o.gain_lo = o.gain_hi = 1.0;
  const auto ex = make_paired_example(clip, rir, 3, o);
  auto full = convolve_full(clip.waveform, rir.h);
  full.samples.resize(clip.waveform.size());
  const double peak = peak_abs(full.samples);
  for (std::size_t i = 0; i < ex.x_r.size(); i += 101) EXPECT_NEAR(ex.x_r[i], full[ex.offset_r + i] / peak, 1e-9);
}

TEST(MakeExample, UnpairedRequiresDisjointHalves) {
  const auto a = make_clip(ids_in_half(Half::A, 1, "x")[0], 4);
  const auto b = make_clip(ids_in_half(Half::B, 1, "x")[0], 5);
  const auto ex = make_unpaired_example(b, a, test_rirs()[0], 1);
  EXPECT_EQ(ex.source_r, b.source_utterance);
  EXPECT_EQ(ex.source_d, a.source_utterance);
  EXPECT_FALSE(ex.paired_target.has_value());
  EXPECT_EQ(ex.x_r.size(), 8192u);
  EXPECT_EQ(ex.y_d.size(), 8192u);
  EXPECT_NEAR(peak_abs(ex.y_d.samples), ex.gain_d, 1e-12 + 1.0);  // crop may miss the clip peak
  EXPECT_LE(peak_abs(ex.y_d.samples), ex.gain_d + 1e-12);
  EXPECT_THROW(make_unpaired_example(a, b, test_rirs()[0], 1), InvalidArgument);
  EXPECT_THROW(make_unpaired_example(b, b, test_rirs()[0], 1), InvalidArgument);
}

TEST(ExampleStream, UnpairedEpochIsDisjointAndCoversBothHalves) {
  ExampleStream stream(mixed_clips(6), test_rirs(), TrainMode::unpaired, 11);
  std::set<std::string> rev, dry;
  for (std::size_t i = 0; i < stream.epoch_size(); ++i) {
    const auto ex = stream.next();
    EXPECT_EQ(assign_half(ex.source_r), Half::B);
    EXPECT_EQ(assign_half(ex.source_d), Half::A);
    rev.insert(ex.source_r);
    dry.insert(ex.source_d);
  }
  EXPECT_EQ(stream.epoch(), 1u);
  for (const auto& u : rev) EXPECT_EQ(dry.count(u), 0u);
  EXPECT_EQ(rev.size(), 6u);
  EXPECT_EQ(dry.size(), 6u);
}

TEST(ExampleStream, DeterministicAndResumable) {
  const auto clips = mixed_clips(3);
  ExampleStream a(clips, test_rirs(), TrainMode::paired, 5), b(clips, test_rirs(), TrainMode::paired, 5);
  std::vector<TrainingExample> first;
  for (int i = 0; i < 30; ++i) {
    const auto x = a.next(), y = b.next();
    ASSERT_EQ(x.x_r.samples, y.x_r.samples);
    ASSERT_EQ(x.paired_target->samples, y.paired_target->samples);
    first.push_back(x);
  }
  ExampleStream c(clips, test_rirs(), TrainMode::paired, 5);
  c.seek(first.size() / c.epoch_size(), first.size() % c.epoch_size());
  ExampleStream d(clips, test_rirs(), TrainMode::paired, 6);
  const auto next_a = a.next();
  EXPECT_EQ(c.next().x_r.samples, next_a.x_r.samples);
  EXPECT_NE(d.next().x_r.samples, first[0].x_r.samples);
}

TEST(ExampleStream, RejectsUnusableInput) {
  auto clips = mixed_clips(1);
  EXPECT_THROW(ExampleStream(clips, {}, TrainMode::paired, 1), InvalidArgument);
  std::vector<ClipRecord> only_a;
  for (const auto& c : clips)
    if (c.half == Half::A) only_a.push_back(c);
  EXPECT_THROW(ExampleStream(only_a, test_rirs(), TrainMode::unpaired, 1), InvalidArgument);
  EXPECT_NO_THROW(ExampleStream(only_a, test_rirs(), TrainMode::paired, 1));
}

TEST(PrepareDataset, FiltersSegmentsAndIsReproducible) {
  const auto in = fresh_dir("in"), out1 = fresh_dir("out1"), out2 = fresh_dir("out2");
  const auto& rirs = test_rirs();
  for (int i = 0; i < 4; ++i) {
    const auto dry = synthetic_speech(7.0, 40 + i);
    write_wav(in / ("clean" + std::to_string(i) + ".wav"), dry);
    write_wav(in / ("reverb" + std::to_string(i) + ".wav"), convolve_range(dry, rirs[i + 4].h, 0, dry.size()));
  }
  write_wav(in / "short.wav", synthetic_speech(0.5, 1));
  write_wav(in / "narrow.wav", Waveform(synthetic_speech(4.0, 2).samples, 8000));
  {
    std::ofstream f(in / "broken.wav");
    f << "not audio";
  }
  auto enhance = [](const Waveform& x) { return energy_decay_enhancer(x); };
  const auto m1 = prepare_dataset(in, out1, enhance, "energy-decay");
  const auto m2 = prepare_dataset(in, out2, enhance, "energy-decay");
  EXPECT_EQ(read_text(out1 / "dataset.json"), read_text(out2 / "dataset.json"));

  ASSERT_EQ(m1.sources.size(), 11u);
  std::map<std::string, SourceRecord> by_file;
  for (const auto& s : m1.sources) by_file[s.file] = s;
  for (int i = 0; i < 4; ++i) {
    EXPECT_TRUE(by_file["clean" + std::to_string(i) + ".wav"].accepted);
    EXPECT_EQ(by_file["clean" + std::to_string(i) + ".wav"].clips, 2u);
  }
  EXPECT_EQ(by_file["short.wav"].reason, "shorter than 1 s");
  EXPECT_NE(by_file["narrow.wav"].reason.find("sample rate"), std::string::npos);
  EXPECT_NE(by_file["broken.wav"].reason.find("unreadable"), std::string::npos);
  std::size_t reverb_rejected = 0;
  for (int i = 0; i < 4; ++i) reverb_rejected += !by_file["reverb" + std::to_string(i) + ".wav"].accepted;
  EXPECT_GE(reverb_rejected, 3u);

  const auto clips = load_dataset(out1);
  EXPECT_EQ(clips.size(), m1.clips.size());
  for (const auto& c : clips) {
    EXPECT_EQ(c.waveform.size(), kClipSamples);
    EXPECT_EQ(c.half, assign_half(c.source_utterance));
  }
  const auto back = DatasetManifest::from_json(nlohmann::json::parse(m1.to_json().dump()));
  EXPECT_EQ(back.to_json(), m1.to_json());
}
