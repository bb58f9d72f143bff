// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "dereverb/dsp/wav_io.hpp"
#include "dereverb/io.hpp"
#include "dereverb/metrics/report.hpp"

namespace dereverb {

/// Evaluation set directory: eval_set.json lists (id, reverberant, reference)
/// with paths relative to the directory.
inline constexpr const char* kEvalSetManifestName = "eval_set.json";

struct SkippedPair {
  std::string id;
  std::string reason;
};

struct EvalSet {
  std::vector<EvalPair> pairs;
  std::vector<SkippedPair> skipped;
};

/// Writes reverberant/<id>.wav, reference/<id>.wav and the manifest.
inline void write_eval_set(const std::filesystem::path& dir, const std::vector<EvalPair>& pairs) {
  std::filesystem::create_directories(dir / "reverberant");
  std::filesystem::create_directories(dir / "reference");
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (const auto& p : pairs) {
    const std::string rev = "reverberant/" + p.id + ".wav", ref = "reference/" + p.id + ".wav";
    write_wav(dir / rev, p.reverberant);
    write_wav(dir / ref, p.reference);
    entries.push_back({{"id", p.id}, {"reverberant", rev}, {"reference", ref}});
  }
  nlohmann::ordered_json m;
  m["format"] = "dereverb-eval-set";
  m["version"] = 1;
  m["pairs"] = entries;
  write_text_atomic(dir / kEvalSetManifestName, m.dump(2) + "\n");
}

/// Loads every listed pair; a pair with a missing or unreadable member, a
/// sample rate other than 16 kHz or mismatched lengths is skipped and counted.
inline EvalSet load_eval_set(const std::filesystem::path& dir) {
  const auto m = read_json(dir / kEvalSetManifestName);
  if (m.value("format", "") != "dereverb-eval-set") throw IoError(dir.string() + ": not an evaluation set");
  EvalSet out;
  try {
    for (const auto& e : m.at("pairs")) {
      const std::string id = e.at("id");
      try {
        EvalPair p{id, read_wav(dir / e.at("reverberant").get<std::string>()),
                   read_wav(dir / e.at("reference").get<std::string>())};
        if (p.reverberant.sample_rate_hz != kSampleRate || p.reference.sample_rate_hz != kSampleRate)
          out.skipped.push_back({id, "sample rate is not 16 kHz"});
        else if (p.reverberant.size() != p.reference.size())
          out.skipped.push_back({id, "reverberant and reference lengths differ"});
        else
          out.pairs.push_back(std::move(p));
      } catch (const IoError& err) {
        out.skipped.push_back({id, err.what()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(dir.string() + ": corrupt evaluation manifest (" + e.what() + ")");
  }
  return out;
}

}  // namespace dereverb
