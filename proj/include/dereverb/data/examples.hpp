// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dereverb/data/clips.hpp"
#include "dereverb/dsp/convolve.hpp"
#include "dereverb/nn/tensor.hpp"
#include "dereverb/room/rir_analysis.hpp"

namespace dereverb {

enum class TrainMode { paired, unpaired };

inline const char* to_string(TrainMode m) { return m == TrainMode::paired ? "paired" : "unpaired"; }

inline TrainMode train_mode_from_string(const std::string& s) {
  if (s == "paired") return TrainMode::paired;
  if (s == "unpaired") return TrainMode::unpaired;
  throw InvalidArgument("unknown training mode '" + s + "'");
}

struct ExampleOptions {
  std::size_t crop_samples = 8192;
  double gain_lo = 0.3;
  double gain_hi = 1.0;

  void validate() const {
    if (crop_samples == 0) throw InvalidArgument("crop length must be positive");
    if (!(gain_lo > 0 && gain_lo <= gain_hi)) throw InvalidArgument("gain range must satisfy 0 < lo <= hi");
  }
};

struct TrainingExample {
  TrainMode mode = TrainMode::paired;
  Waveform x_r;                          // reverberant input
  Waveform y_d;                          // dry sample (unpaired: independent clip; paired: equals the target)
  std::optional<Waveform> paired_target; // early-reverberation target aligned with x_r
  std::string source_r, source_d;        // utterances behind x_r and y_d
  double gain_r = 1, gain_d = 1;
  std::size_t offset_r = 0, offset_d = 0;
};

namespace detail {

inline Waveform reverberate(const Waveform& clip, const Waveform& h) {
  return convolve_range(clip, h, 0, clip.size());
}

inline Waveform normalized_crop(const Waveform& w, double gain, std::size_t offset, std::size_t len) {
  const double peak = peak_abs(w.samples);
  const double k = peak > 0 ? gain / peak : 0.0;
  Waveform out = Waveform::zeros(len, w.sample_rate_hz);
  for (std::size_t i = 0; i < len; ++i) out[i] = k * w[offset + i];
  return out;
}

inline std::size_t crop_offset(Rng& rng, std::size_t clip_len, std::size_t crop) {
  if (clip_len < crop) throw InvalidArgument("clip shorter than the training crop");
  return static_cast<std::size_t>(uniform_index(rng, clip_len - crop + 1));
}

}  // namespace detail

/// Paired example: the clip convolved with the RIR (truncated to the clip
/// length) as input and the clip convolved with the early-reverberation part
/// as target. Each side is peak-normalized, both share one random gain and one
/// crop offset.
/// `early` may carry a precomputed early_reverb_target(rir).
inline TrainingExample make_paired_example(const ClipRecord& clip, const ImpulseResponse& rir, std::uint64_t seed,
                                           const ExampleOptions& o = {}, const ImpulseResponse* early = nullptr) {
  o.validate();
  const ImpulseResponse early_local = early ? ImpulseResponse{} : early_reverb_target(rir);
  if (!early) early = &early_local;
  Rng rng(mix_seed(seed));
  const double gain = uniform(rng, o.gain_lo, o.gain_hi);
  const std::size_t off = detail::crop_offset(rng, clip.waveform.size(), o.crop_samples);
  TrainingExample ex;
  ex.mode = TrainMode::paired;
  ex.x_r = detail::normalized_crop(detail::reverberate(clip.waveform, rir.h), gain, off, o.crop_samples);
  ex.paired_target = detail::normalized_crop(detail::reverberate(clip.waveform, early->h), gain,
                                             off, o.crop_samples);
  ex.y_d = *ex.paired_target;
  ex.source_r = ex.source_d = clip.source_utterance;
  ex.gain_r = ex.gain_d = gain;
  ex.offset_r = ex.offset_d = off;
  return ex;
}

/// Unpaired example: a half-B clip reverberated by the RIR and an unrelated
/// half-A clip kept dry, each with its own gain and crop offset.
inline TrainingExample make_unpaired_example(const ClipRecord& reverberant_source, const ClipRecord& dry_source,
                                             const ImpulseResponse& rir, std::uint64_t seed,
                                             const ExampleOptions& o = {}) {
  o.validate();
  if (reverberant_source.half != Half::B || dry_source.half != Half::A)
    throw InvalidArgument("unpaired example needs a half-B reverberant clip and a half-A dry clip");
  if (reverberant_source.source_utterance == dry_source.source_utterance)
    throw InvalidArgument("unpaired example drawn twice from one utterance");
  Rng rng(mix_seed(seed));
  TrainingExample ex;
  ex.mode = TrainMode::unpaired;
  ex.gain_r = uniform(rng, o.gain_lo, o.gain_hi);
  ex.gain_d = uniform(rng, o.gain_lo, o.gain_hi);
  ex.offset_r = detail::crop_offset(rng, reverberant_source.waveform.size(), o.crop_samples);
  ex.offset_d = detail::crop_offset(rng, dry_source.waveform.size(), o.crop_samples);
  ex.x_r = detail::normalized_crop(detail::reverberate(reverberant_source.waveform, rir.h), ex.gain_r, ex.offset_r,
                                   o.crop_samples);
  ex.y_d = detail::normalized_crop(dry_source.waveform, ex.gain_d, ex.offset_d, o.crop_samples);
  ex.source_r = reverberant_source.source_utterance;
  ex.source_d = dry_source.source_utterance;
  return ex;
}

/// Deterministic pull-based example stream. Each epoch reshuffles the clips
/// (and, unpaired, pairs the i-th half-B clip with the i-th half-A clip); RIRs
/// are drawn uniformly per example. The position (epoch, index) fully
/// determines the next example, so a stream can be resumed from it.
class ExampleStream {
 public:
  ExampleStream(std::vector<ClipRecord> clips, std::vector<ImpulseResponse> rirs, TrainMode mode,
                std::uint64_t seed, ExampleOptions o = {})
      : rirs_(std::move(rirs)), mode_(mode), seed_(seed), o_(o) {
    o_.validate();
    if (rirs_.empty()) throw InvalidArgument("example stream needs at least one RIR");
    if (mode_ == TrainMode::paired)
      for (const auto& r : rirs_) early_.push_back(early_reverb_target(r));
    for (auto& c : clips) {
      if (c.waveform.size() < o_.crop_samples) throw InvalidArgument("clip " + c.clip_id + " shorter than the crop");
      if (mode_ == TrainMode::paired)
        all_.push_back(std::move(c));
      else
        (c.half == Half::A ? dry_ : reverberant_).push_back(std::move(c));
    }
    if (mode_ == TrainMode::paired && all_.empty()) throw InvalidArgument("example stream has no clips");
    if (mode_ == TrainMode::unpaired && (dry_.empty() || reverberant_.empty()))
      throw InvalidArgument("unpaired stream needs clips in both halves");
    shuffle_epoch();
  }

  TrainMode mode() const { return mode_; }
  std::size_t epoch_size() const {
    return mode_ == TrainMode::paired ? all_.size() : std::min(dry_.size(), reverberant_.size());
  }
  std::size_t epoch() const { return epoch_; }
  std::size_t position() const { return index_; }

  /// Jumps to a saved position.
  void seek(std::size_t epoch, std::size_t index) {
    if (index >= epoch_size()) throw InvalidArgument("stream position out of range");
    epoch_ = epoch;
    index_ = index;
    shuffle_epoch();
  }

  TrainingExample next() {
    const std::uint64_t ex_seed = derive_seed(derive_seed(seed_, 1 + epoch_), index_);
    Rng pick(mix_seed(ex_seed ^ 0x5249));
    const std::size_t r = uniform_index(pick, rirs_.size());
    const auto& rir = rirs_[r];
    TrainingExample ex = mode_ == TrainMode::paired
                             ? make_paired_example(all_[order_a_[index_]], rir, ex_seed, o_, &early_[r])
                             : make_unpaired_example(reverberant_[order_b_[index_]], dry_[order_a_[index_]], rir,
                                                     ex_seed, o_);
    if (++index_ == epoch_size()) {
      index_ = 0;
      ++epoch_;
      shuffle_epoch();
    }
    return ex;
  }

  std::vector<TrainingExample> next_batch(std::size_t n) {
    std::vector<TrainingExample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(next());
    return out;
  }

 private:
  void shuffle_epoch() {
    auto shuffled = [&](std::size_t n, std::uint64_t lane) {
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      Rng rng(derive_seed(derive_seed(seed_, 0x5eed), epoch_ * 2 + lane));
      for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
      return idx;
    };
    if (mode_ == TrainMode::paired) {
      order_a_ = shuffled(all_.size(), 0);
    } else {
      order_a_ = shuffled(dry_.size(), 0);
      order_b_ = shuffled(reverberant_.size(), 1);
    }
  }

  std::vector<ClipRecord> all_, dry_, reverberant_;
  std::vector<ImpulseResponse> rirs_, early_;
  TrainMode mode_;
  std::uint64_t seed_;
  ExampleOptions o_;
  std::size_t epoch_ = 0, index_ = 0;
  std::vector<std::size_t> order_a_, order_b_;
};

/// Stacks waveforms of equal length into an [N, L] tensor.
template <class T>
nn::Tensor<T> stack_batch(const std::vector<const Waveform*>& ws) {
  if (ws.empty()) throw InvalidArgument("empty batch");
  const std::size_t len = ws[0]->size();
  std::vector<T> v;
  v.reserve(ws.size() * len);
  for (const auto* w : ws) {
    if (w->size() != len) throw InvalidArgument("batch waveforms differ in length");
    for (double s : w->samples) v.push_back(static_cast<T>(s));
  }
  return nn::Tensor<T>::from({ws.size(), len}, std::move(v));
}

}  // namespace dereverb
