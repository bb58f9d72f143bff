// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "dereverb/data/clips.hpp"
#include "dereverb/data/dryness.hpp"
#include "dereverb/dsp/wav_io.hpp"
#include "dereverb/io.hpp"

namespace dereverb {

inline constexpr const char* kDatasetManifestName = "dataset.json";

/// Outcome for one input file.
struct SourceRecord {
  std::string file;  // path relative to the input directory
  std::string utterance_id;
  bool accepted = false;
  std::string reason;
  double min_ratio = 0, mean_log_ratio = 0;
  std::size_t clips = 0;
};

struct ClipEntry {
  std::string clip_id, utterance_id, file;
  Half half = Half::A;
};

struct DatasetManifest {
  std::string filter;  // name of the enhancer behind the dryness filter
  DrynessOptions dryness;
  std::vector<SourceRecord> sources;
  std::vector<ClipEntry> clips;

  std::size_t accepted_sources() const {
    return static_cast<std::size_t>(std::count_if(sources.begin(), sources.end(), [](auto& s) { return s.accepted; }));
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["filter"] = filter;
    j["dryness"] = {{"window_s", dryness.window_s},
                    {"stride_s", dryness.stride_s},
                    {"theta_window", dryness.theta_window},
                    {"theta_logmean", dryness.theta_logmean}};
    j["sources"] = nlohmann::ordered_json::array();
    for (const auto& s : sources)
      j["sources"].push_back({{"file", s.file},
                              {"utterance_id", s.utterance_id},
                              {"accepted", s.accepted},
                              {"reason", s.reason},
                              {"min_ratio", std::isfinite(s.min_ratio) ? nlohmann::ordered_json(s.min_ratio)
                                                                       : nlohmann::ordered_json("inf")},
                              {"mean_log_ratio", s.mean_log_ratio},
                              {"clips", s.clips}});
    j["clips"] = nlohmann::ordered_json::array();
    for (const auto& c : clips)
      j["clips"].push_back(
          {{"clip_id", c.clip_id}, {"utterance_id", c.utterance_id}, {"half", to_string(c.half)}, {"file", c.file}});
    return j;
  }

  static DatasetManifest from_json(const nlohmann::json& j) {
    DatasetManifest m;
    try {
      m.filter = j.at("filter");
      const auto& d = j.at("dryness");
      m.dryness = {d.at("window_s"), d.at("stride_s"), d.at("theta_window"), d.at("theta_logmean")};
      for (const auto& s : j.at("sources")) {
        SourceRecord r;
        r.file = s.at("file");
        r.utterance_id = s.at("utterance_id");
        r.accepted = s.at("accepted");
        r.reason = s.at("reason");
        r.min_ratio = s.at("min_ratio").is_string() ? INFINITY : s.at("min_ratio").get<double>();
        r.mean_log_ratio = s.at("mean_log_ratio");
        r.clips = s.at("clips");
        m.sources.push_back(r);
      }
      for (const auto& c : j.at("clips"))
        m.clips.push_back({c.at("clip_id"), c.at("utterance_id"), c.at("file"), half_from_string(c.at("half"))});
    } catch (const nlohmann::json::exception& e) {
      throw IoError(std::string("malformed dataset manifest: ") + e.what());
    }
    return m;
  }
};

/// WAV files under `dir`, sorted by relative path.
inline std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".wav") out.push_back(std::filesystem::relative(e.path(), dir));
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Utterance id of a file: its relative path without extension, '/' -> '-'.
inline std::string utterance_id_for(const std::filesystem::path& relative) {
  auto s = relative;
  s.replace_extension();
  std::string id = s.generic_string();
  std::replace(id.begin(), id.end(), '/', '-');
  return id;
}

/// Filters, segments and half-assigns every WAV in `in_dir`, writing clips to
/// `out_dir/clips/` and the manifest to `out_dir/dataset.json`. Unreadable,
/// wrong-rate, short and non-dry files are listed with a reason.
inline DatasetManifest prepare_dataset(const std::filesystem::path& in_dir, const std::filesystem::path& out_dir,
                                       const WaveformTransform& enhancer, const std::string& filter_name,
                                       const DrynessOptions& o = {}) {
  DatasetManifest m;
  m.filter = filter_name;
  m.dryness = o;
  const auto files = list_wavs(in_dir);
  std::filesystem::create_directories(out_dir / "clips");
  for (const auto& rel : files) {
    SourceRecord s;
    s.file = rel.generic_string();
    s.utterance_id = utterance_id_for(rel);
    Waveform w;
    try {
      w = read_wav(in_dir / rel);
    } catch (const IoError& e) {
      s.reason = std::string("unreadable: ") + e.what();
      m.sources.push_back(s);
      continue;
    }
    if (w.sample_rate_hz != kSampleRate) {
      s.reason = "sample rate " + std::to_string(w.sample_rate_hz) + " Hz";
    } else if (w.duration_s() < kMinUtteranceSeconds) {
      s.reason = "shorter than 1 s";
    } else if (w.size() < kClipSamples) {
      s.reason = "shorter than one clip";
    } else {
      const auto r = dryness_filter(w, enhancer, o);
      s.accepted = r.accepted;
      s.reason = r.reason;
      s.min_ratio = r.min_ratio;
      s.mean_log_ratio = r.mean_log_ratio;
    }
    if (s.accepted) {
      for (auto& c : segment_clips(w, s.utterance_id)) {
        const std::string file = "clips/" + c.clip_id + ".wav";
        write_wav(out_dir / file, c.waveform);
        m.clips.push_back({c.clip_id, c.source_utterance, file, c.half});
        ++s.clips;
      }
    }
    m.sources.push_back(s);
  }
  write_text_atomic(out_dir / kDatasetManifestName, m.to_json().dump(2) + "\n");
  return m;
}

inline DatasetManifest read_dataset_manifest(const std::filesystem::path& dir) {
  return DatasetManifest::from_json(read_json(dir / kDatasetManifestName));
}

/// Loads every clip listed in the manifest; halves are re-derived and checked.
inline std::vector<ClipRecord> load_dataset(const std::filesystem::path& dir) {
  const auto m = read_dataset_manifest(dir);
  std::vector<ClipRecord> out;
  for (const auto& e : m.clips) {
    if (assign_half(e.utterance_id) != e.half)
      throw IoError("dataset manifest half for " + e.clip_id + " disagrees with its utterance");
    ClipRecord c;
    c.clip_id = e.clip_id;
    c.source_utterance = e.utterance_id;
    c.half = e.half;
    c.waveform = read_wav(dir / e.file);
    if (c.waveform.size() != kClipSamples) throw IoError(e.file + ": clip is not 3 s long");
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace dereverb
