// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dereverb/dsp/wav_io.hpp"
#include "dereverb/io.hpp"
#include "dereverb/room/image_method.hpp"

namespace dereverb {

/// Raised when the T60 filter rejects nearly everything.
class CorpusAbort : public Error {
 public:
  using Error::Error;
};

struct CorpusOptions {
  std::size_t workers = 1;
  /// Abort when fewer than min_acceptance of the last abort_window attempts were kept.
  std::size_t abort_window = 10000;
  double min_acceptance = 0.01;
  SimulationOptions simulation{};
};

/// Seed of attempt `k` in a corpus built from `rng_seed`.
inline std::uint64_t corpus_attempt_seed(std::uint64_t rng_seed, std::uint64_t k) {
  return derive_seed(rng_seed, k);
}

/// Samples rooms and simulates until `n` responses with T60 >= t60_min_s are
/// collected. Attempts run in fixed seed order; workers only change speed.
inline std::vector<ImpulseResponse> build_rir_corpus(std::size_t n, double t60_min_s,
                                                     std::uint64_t rng_seed,
                                                     const CorpusOptions& opts = {}) {
  if (n == 0) throw InvalidArgument("corpus size must be positive");
  std::vector<ImpulseResponse> kept;
  std::deque<bool> window;
  std::size_t window_hits = 0;
  std::uint64_t next = 0;
  const std::size_t workers = std::max<std::size_t>(1, opts.workers);
  while (kept.size() < n) {
    std::vector<ImpulseResponse> batch(workers);
    auto run = [&](std::size_t i) {
      const std::uint64_t seed = corpus_attempt_seed(rng_seed, next + i);
      batch[i] = simulate_rir(sample_room(seed), opts.simulation, seed);
    };
    if (workers == 1) {
      run(0);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(run, i);
      for (auto& t : pool) t.join();
    }
    next += workers;
    for (auto& ir : batch) {
      const bool ok = std::isfinite(ir.t60_s) && ir.t60_s >= t60_min_s;
      window.push_back(ok);
      window_hits += ok;
      if (window.size() > opts.abort_window) {
        window_hits -= window.front();
        window.pop_front();
      }
      if (ok && kept.size() < n) kept.push_back(std::move(ir));
      if (window.size() == opts.abort_window &&
          static_cast<double>(window_hits) < opts.min_acceptance * opts.abort_window) {
        std::ostringstream msg;
        msg << "RIR acceptance below " << opts.min_acceptance * 100 << "% over the last "
            << opts.abort_window << " attempts (kept " << window_hits << "; " << kept.size()
            << " of " << n << " collected after " << next << " attempts, t60_min "
            << t60_min_s << " s)";
        throw CorpusAbort(msg.str());
      }
    }
  }
  return kept;
}

inline nlohmann::json to_json(const Vec3& v) { return {v.x, v.y, v.z}; }

inline nlohmann::json rir_metadata(const ImpulseResponse& ir) {
  const auto& r = ir.room;
  return {
      {"seed", ir.rng_seed},
      {"t60_s", std::isfinite(ir.t60_s) ? nlohmann::json(ir.t60_s) : nlohmann::json(nullptr)},
      {"drr_db", ir.drr_db},
      {"samples", ir.h.size()},
      {"room",
       {{"width_m", r.width_m},
        {"length_m", r.length_m},
        {"height_m", r.height_m},
        {"wall", r.wall.name},
        {"floor", r.floor.name},
        {"ceiling", r.ceiling.name},
        {"source", to_json(r.source)},
        {"mic", to_json(r.mic)}}},
  };
}

inline std::string rir_file_stem(std::size_t index) {
  std::ostringstream s;
  s << "rir_" << std::setw(6) << std::setfill('0') << index;
  return s.str();
}

/// Writes one float WAV plus a JSON sidecar per response and a manifest.json
/// listing every entry.
inline void write_rir_corpus(const std::filesystem::path& dir,
                             const std::vector<ImpulseResponse>& corpus,
                             const nlohmann::json& params = nlohmann::json::object()) {
  std::filesystem::create_directories(dir);
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::string stem = rir_file_stem(i);
    write_wav(dir / (stem + ".wav"), corpus[i].h);
    auto meta = rir_metadata(corpus[i]);
    write_text_atomic(dir / (stem + ".json"), meta.dump(2) + "\n");
    meta["file"] = stem + ".wav";
    entries.push_back(std::move(meta));
  }
  nlohmann::json manifest = {{"format", "dereverb-rir-corpus"},
                             {"version", 1},
                             {"params", params},
                             {"entries", entries}};
  write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

struct RirCorpusEntry {
  std::filesystem::path file;
  std::uint64_t seed = 0;
  double t60_s = NAN;
  double drr_db = NAN;
};

inline std::vector<RirCorpusEntry> read_rir_manifest(const std::filesystem::path& dir) {
  const auto j = read_json(dir / "manifest.json");
  if (j.value("format", "") != "dereverb-rir-corpus") throw IoError("not an RIR corpus manifest");
  std::vector<RirCorpusEntry> out;
  for (const auto& e : j.at("entries")) {
    RirCorpusEntry r;
    r.file = dir / e.at("file").get<std::string>();
    r.seed = e.at("seed").get<std::uint64_t>();
    r.t60_s = e.at("t60_s").is_null() ? NAN : e.at("t60_s").get<double>();
    r.drr_db = e.at("drr_db").get<double>();
    out.push_back(r);
  }
  return out;
}

/// Loads every response of a corpus directory; T60/DRR are re-measured from the audio.
inline std::vector<ImpulseResponse> load_rir_corpus(const std::filesystem::path& dir) {
  std::vector<ImpulseResponse> out;
  for (const auto& e : read_rir_manifest(dir)) {
    ImpulseResponse ir;
    ir.h = read_wav(e.file);
    validate(ir.h);
    ir.rng_seed = e.seed;
    measure(ir);
    out.push_back(std::move(ir));
  }
  return out;
}

}  // namespace dereverb
