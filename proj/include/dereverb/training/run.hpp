// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dereverb/io.hpp"
#include "dereverb/metrics/report.hpp"
#include "dereverb/training/trainer.hpp"

namespace dereverb {

inline constexpr const char* kCheckpointFile = "checkpoint.drvb";
inline constexpr const char* kMetricsLogFile = "metrics.jsonl";

struct TrainRunOptions {
  std::vector<EvalPair> eval_set;       // scored every eval_every steps when non-empty
  std::size_t eval_bootstrap = 1000;
  std::function<void(std::size_t step, const LossReport&)> on_step;  // progress hook
};

struct TrainRunResult {
  std::size_t start_step = 0, end_step = 0;
  bool resumed = false;
  LossReport last;
};

namespace detail {

inline nlohmann::ordered_json train_row(std::size_t step, const LossReport& r) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["kind"] = "train";
  for (const auto& [k, v] : r.values) j[k] = v;
  return j;
}

inline nlohmann::ordered_json eval_row(std::size_t step, const EvaluationResult& e) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["kind"] = "eval";
  auto put = [&](const char* name, const AggregateMetric& a) { j[name] = std::isfinite(a.mean) ? a.mean : 0.0; };
  put("fwsegsnr_db", e.model.fwsegsnr_db);
  put("sdr_db", e.model.sdr_db);
  put("estimated_t60_s", e.model.estimated_t60_s);
  put("no_model_fwsegsnr_db", e.no_model.fwsegsnr_db);
  put("no_model_sdr_db", e.no_model.sdr_db);
  put("no_model_estimated_t60_s", e.no_model.estimated_t60_s);
  return j;
}

/// Keeps log rows up to and including `step` (drops rows a crash left behind).
inline void truncate_log(const std::filesystem::path& path, std::size_t step) {
  if (!std::filesystem::exists(path)) return;
  std::istringstream in(read_text(path));
  std::string line, kept;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("step")) continue;
    if (j["step"].get<std::size_t>() <= step) kept += line + "\n";
  }
  write_text_atomic(path, kept);
}

}  // namespace detail

/// Reads the metrics log as JSON rows.
inline std::vector<nlohmann::json> read_metrics_log(const std::filesystem::path& path) {
  std::vector<nlohmann::json> rows;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
  return rows;
}

/// Trains from `out_dir/checkpoint.drvb` when present (continuing its step
/// counter and stream position) or from scratch, appending one row per step
/// to `out_dir/metrics.jsonl` and checkpointing every checkpoint_every steps
/// and at the end.
template <class T = float>
TrainRunResult run_training(const TrainConfig& cfg, std::vector<ClipRecord> clips, std::vector<ImpulseResponse> rirs,
                            const std::filesystem::path& out_dir, const TrainRunOptions& opts = {}) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  const auto ckpt = out_dir / kCheckpointFile;
  const auto log_path = out_dir / kMetricsLogFile;

  Trainer<T> trainer(cfg);
  ExampleStream stream(std::move(clips), std::move(rirs), cfg.mode, derive_seed(cfg.rng_seed, 0xda7a),
                       cfg.example_options());
  TrainRunResult res;
  if (std::filesystem::exists(ckpt)) {
    const auto extra = trainer.load(ckpt);
    stream.seek(extra.at("stream_epoch"), extra.at("stream_index"));
    detail::truncate_log(log_path, trainer.step());
    res.resumed = true;
  } else {
    write_text_atomic(log_path, "");
  }
  res.start_step = trainer.step();

  auto save = [&] {
    trainer.save(ckpt, {{"stream_epoch", stream.epoch()}, {"stream_index", stream.position()}});
  };
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw IoError("cannot append to " + log_path.string());
  while (trainer.step() < cfg.total_steps) {
    const auto batch = stream.next_batch(cfg.batch_size);
    res.last = trainer.train_step(batch);
    const std::size_t step = trainer.step();
    log << detail::train_row(step, res.last).dump() << "\n";
    if (cfg.eval_every && step % cfg.eval_every == 0 && !opts.eval_set.empty()) {
      const auto& g = trainer.g_rd();
      const auto e = evaluate_model([&](const Waveform& w) { return g.enhance(w); }, opts.eval_set,
                                    {opts.eval_bootstrap, 0});
      log << detail::eval_row(step, e).dump() << "\n";
    }
    log.flush();
    if (!log) throw IoError("write failed for " + log_path.string());
    if (opts.on_step) opts.on_step(step, res.last);
    if (step % cfg.checkpoint_every == 0 || step == cfg.total_steps) save();
  }
  res.end_step = trainer.step();
  return res;
}

}  // namespace dereverb
