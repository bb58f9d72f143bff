// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "dereverb/dsp/waveform.hpp"
#include "dereverb/random.hpp"

namespace dereverb {

inline constexpr std::size_t kClipSamples = 3 * kSampleRate;
inline constexpr double kMinUtteranceSeconds = 1.0;

/// Unpaired split: dry material comes from half A, reverberant material from half B.
enum class Half { A, B };

inline const char* to_string(Half h) { return h == Half::A ? "A" : "B"; }

inline Half half_from_string(const std::string& s) {
  if (s == "A") return Half::A;
  if (s == "B") return Half::B;
  throw InvalidArgument("unknown half '" + s + "'");
}

/// Hash-based split keyed on the utterance id only.
inline Half assign_half(const std::string& utterance_id) {
  return (mix_seed(stable_hash(utterance_id)) >> 63) ? Half::B : Half::A;
}

inline std::map<std::string, Half> assign_halves(const std::vector<std::string>& utterance_ids) {
  std::map<std::string, Half> out;
  for (const auto& id : utterance_ids) out[id] = assign_half(id);
  return out;
}

struct ClipRecord {
  std::string clip_id;
  Waveform waveform;
  std::string source_utterance;
  Half half = Half::A;
};

inline std::string clip_id_for(const std::string& utterance_id, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", index);
  return utterance_id + "_" + buf;
}

/// Consecutive non-overlapping 3 s clips; the remainder is dropped.
inline std::vector<ClipRecord> segment_clips(const Waveform& w, const std::string& utterance_id) {
  std::vector<ClipRecord> out;
  const Half half = assign_half(utterance_id);
  for (std::size_t k = 0; (k + 1) * kClipSamples <= w.size(); ++k) {
    ClipRecord c;
    c.clip_id = clip_id_for(utterance_id, k);
    c.waveform = Waveform(std::vector<double>(w.samples.begin() + k * kClipSamples,
                                              w.samples.begin() + (k + 1) * kClipSamples),
                          w.sample_rate_hz);
    c.source_utterance = utterance_id;
    c.half = half;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace dereverb
