// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dereverb/data/dataset.hpp"
#include "dereverb/metrics/eval_set.hpp"
#include "dereverb/room/rir_corpus.hpp"
#include "dereverb/training/run.hpp"
#include "dereverb/version.hpp"

namespace dereverb::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitIo = 4;

inline constexpr const char* kRunManifestName = "run.json";
inline constexpr const char* kWorkersEnv = "DEREVERB_WORKERS";

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::size_t default_workers() {
  if (const char* v = std::getenv(kWorkersEnv)) {
    try {
      const long n = std::stol(v);
      if (n > 0) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
    throw InvalidArgument(std::string(kWorkersEnv) + " must be a positive integer");
  }
  return 1;
}

/// Provenance record written atomically into each output directory at the end
/// of a successful run.
struct RunManifest {
  std::string command;
  std::string config_path;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::optional<std::uint64_t> seed;
  std::string started = utc_now();
  nlohmann::ordered_json outputs = nlohmann::ordered_json::object();
  nlohmann::ordered_json details = nlohmann::ordered_json::object();

  void write(const fs::path& dir) const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["config_path"] = config_path.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(config_path);
    j["config"] = config;
    j["seed"] = seed ? nlohmann::ordered_json(*seed) : nlohmann::ordered_json();
    j["toolkit_version"] = kToolkitVersion;
    j["started"] = started;
    j["finished"] = utc_now();
    j["outputs"] = outputs;
    if (!details.empty()) j["details"] = details;
    fs::create_directories(dir);
    write_text_atomic(dir / kRunManifestName, j.dump(2) + "\n");
  }
};

inline fs::path parent_dir(const fs::path& file) {
  const auto p = fs::absolute(file).parent_path();
  return p.empty() ? fs::current_path() : p;
}

struct SimulateArgs {
  fs::path out;
  std::size_t count = 0;
  double t60_min = 0.4;
  std::uint64_t seed = 0;
  std::optional<std::size_t> workers;
};

inline int simulate_rirs(const SimulateArgs& a, std::ostream& out) {
  if (a.count == 0) throw InvalidArgument("--count must be positive");
  if (!(a.t60_min >= 0)) throw InvalidArgument("--t60-min must be non-negative");
  RunManifest m{"simulate-rirs"};
  m.seed = a.seed;
  CorpusOptions o;
  o.workers = a.workers ? *a.workers : default_workers();
  const auto corpus = build_rir_corpus(a.count, a.t60_min, a.seed, o);
  nlohmann::json params = {{"count", a.count}, {"t60_min_s", a.t60_min}, {"seed", a.seed}};
  write_rir_corpus(a.out, corpus, params);
  m.config = params;
  m.outputs = {{"corpus", a.out.string()}, {"manifest", (a.out / "manifest.json").string()}};
  m.write(a.out);
  out << "wrote " << corpus.size() << " RIRs to " << a.out.string() << "\n";
  return kExitOk;
}

struct PrepareArgs {
  fs::path in, out;
  std::string mode = "stage0";
  fs::path enhancer;
  double theta_window = DrynessOptions{}.theta_window;
  double theta_logmean = DrynessOptions{}.theta_logmean;
};

inline int prepare_data(const PrepareArgs& a, std::ostream& out) {
  DrynessOptions d;
  d.theta_window = a.theta_window;
  d.theta_logmean = a.theta_logmean;
  WaveformTransform enhancer;
  if (a.mode == "stage0") {
    if (!a.enhancer.empty()) throw InvalidArgument("--enhancer is only used with --mode model");
    enhancer = [](const Waveform& w) { return energy_decay_enhancer(w); };
  } else if (a.mode == "model") {
    if (a.enhancer.empty()) throw InvalidArgument("--mode model requires --enhancer");
    enhancer = load_enhancer<float>(a.enhancer);
  } else {
    throw InvalidArgument("--mode must be stage0 or model");
  }
  if (!fs::is_directory(a.in)) throw IoError("input directory not found: " + a.in.string());
  RunManifest m{"prepare-data"};
  m.config = {{"mode", a.mode},
              {"enhancer", a.enhancer.empty() ? nlohmann::json() : nlohmann::json(a.enhancer.string())},
              {"theta_window", a.theta_window},
              {"theta_logmean", a.theta_logmean}};
  const auto dm = prepare_dataset(a.in, a.out, enhancer, a.mode, d);
  std::size_t accepted = dm.accepted_sources();
  m.outputs = {{"dataset", a.out.string()}, {"manifest", (a.out / kDatasetManifestName).string()}};
  m.details = {{"sources", dm.sources.size()}, {"accepted", accepted}, {"clips", dm.clips.size()}};
  m.write(a.out);
  out << "accepted " << accepted << " of " << dm.sources.size() << " recordings, " << dm.clips.size()
      << " clips\n";
  return kExitOk;
}

struct TrainArgs {
  fs::path config, data, rirs, out, eval_set;
  std::string mode, preset = "full";
  std::optional<std::size_t> steps, batch_size, eval_every, checkpoint_every;
  std::optional<std::uint64_t> seed;
};

inline TrainConfig resolve_train_config(const TrainArgs& a) {
  TrainMode mode = TrainMode::unpaired;
  nlohmann::json file = nlohmann::json::object();
  if (!a.config.empty()) file = read_json(a.config);
  if (!a.mode.empty())
    mode = train_mode_from_string(a.mode);
  else if (file.contains("mode"))
    mode = train_mode_from_string(file["mode"]);
  TrainConfig base;
  if (a.preset == "toy")
    base = TrainConfig::toy(mode);
  else if (a.preset != "full")
    throw InvalidArgument("--preset must be full or toy");
  auto c = TrainConfig::from_json(file, base);
  c.mode = mode;
  if (a.steps) c.total_steps = *a.steps;
  if (a.batch_size) c.batch_size = *a.batch_size;
  if (a.eval_every) c.eval_every = *a.eval_every;
  if (a.checkpoint_every) c.checkpoint_every = *a.checkpoint_every;
  if (a.seed) c.rng_seed = *a.seed;
  c.validate();
  return c;
}

/// Per-half clip and utterance counts; unpaired runs require disjoint halves.
inline nlohmann::ordered_json audit_halves(const std::vector<ClipRecord>& clips) {
  std::set<std::string> utt[2];
  std::size_t count[2] = {0, 0};
  for (const auto& c : clips) {
    const int h = c.half == Half::A ? 0 : 1;
    ++count[h];
    utt[h].insert(c.source_utterance);
  }
  std::size_t shared = 0;
  for (const auto& u : utt[0]) shared += utt[1].count(u);
  nlohmann::ordered_json j;
  j["half_a_clips"] = count[0];
  j["half_b_clips"] = count[1];
  j["half_a_utterances"] = utt[0].size();
  j["half_b_utterances"] = utt[1].size();
  j["shared_utterances"] = shared;
  return j;
}

inline int train(const TrainArgs& a, std::ostream& out) {
  const auto cfg = resolve_train_config(a);
  RunManifest m{"train", a.config.empty() ? "" : a.config.string()};
  m.seed = cfg.rng_seed;
  m.config = cfg.to_json();
  auto clips = load_dataset(a.data);
  auto rirs = load_rir_corpus(a.rirs);
  m.details["data_audit"] = audit_halves(clips);
  if (cfg.mode == TrainMode::unpaired && m.details["data_audit"]["shared_utterances"] != 0)
    throw InvalidArgument("dataset halves share utterances");
  TrainRunOptions opts;
  if (!a.eval_set.empty()) {
    auto es = load_eval_set(a.eval_set);
    m.details["eval_skipped"] = es.skipped.size();
    opts.eval_set = std::move(es.pairs);
  }
  opts.on_step = [&](std::size_t step, const LossReport& r) {
    if (step % 50 == 0 || step == cfg.total_steps) out << "step " << step << " " << r.to_json().dump() << "\n";
  };
  const auto res = run_training(cfg, std::move(clips), std::move(rirs), a.out, opts);
  m.details["start_step"] = res.start_step;
  m.details["end_step"] = res.end_step;
  m.details["resumed"] = res.resumed;
  m.outputs = {{"checkpoint", (a.out / kCheckpointFile).string()},
               {"metrics_log", (a.out / kMetricsLogFile).string()}};
  m.write(a.out);
  out << (res.resumed ? "resumed at step " : "started at step ") << res.start_step << ", finished at step "
      << res.end_step << "\n";
  return kExitOk;
}

struct EnhanceArgs {
  fs::path ckpt, in, out;
};

inline int enhance(const EnhanceArgs& a, std::ostream& out) {
  RunManifest m{"enhance"};
  m.config = {{"checkpoint", a.ckpt.string()}, {"input", a.in.string()}};
  const auto e = load_enhancer<float>(a.ckpt);
  const auto w = read_wav(a.in);
  if (w.sample_rate_hz != kSampleRate)
    throw IoError(a.in.string() + ": sample rate " + std::to_string(w.sample_rate_hz) + " Hz, expected 16000");
  const auto y = e(w);
  write_wav(a.out, y);
  m.outputs = {{"audio", a.out.string()}};
  m.write(parent_dir(a.out));
  out << "wrote " << y.size() << " samples to " << a.out.string() << "\n";
  return kExitOk;
}

struct EvaluateArgs {
  fs::path ckpt, eval_set, report;
  std::size_t bootstrap = 10000;
  std::uint64_t seed = 0;
};

inline fs::path summary_path(const fs::path& report) {
  auto p = report;
  p += ".summary.txt";
  return p;
}

inline int evaluate(const EvaluateArgs& a, std::ostream& out) {
  if (a.bootstrap == 0) throw InvalidArgument("--bootstrap must be positive");
  RunManifest m{"evaluate"};
  m.seed = a.seed;
  m.config = {{"checkpoint", a.ckpt.string()}, {"eval_set", a.eval_set.string()}, {"bootstrap", a.bootstrap}};
  const auto e = load_enhancer<float>(a.ckpt);
  const auto set = load_eval_set(a.eval_set);
  if (set.pairs.empty()) throw IoError(a.eval_set.string() + ": no usable pairs");
  const auto r = evaluate_model(e, set.pairs, {a.bootstrap, a.seed});
  std::string summary = report_summary(r);
  if (!set.skipped.empty()) {
    summary += std::to_string(set.skipped.size()) + " pairs skipped\n";
    for (const auto& s : set.skipped) summary += "  " + s.id + ": " + s.reason + "\n";
  }
  fs::create_directories(parent_dir(a.report));
  write_text_atomic(a.report, report_csv(r));
  write_text_atomic(summary_path(a.report), summary);
  m.details["utterances"] = set.pairs.size();
  m.details["skipped"] = set.skipped.size();
  m.outputs = {{"report", a.report.string()}, {"summary", summary_path(a.report).string()}};
  m.write(parent_dir(a.report));
  out << summary;
  return kExitOk;
}

/// Parses and runs one command; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Speech dereverberation toolkit"};
  app.set_version_flag("--version", std::string(kToolkitVersion));
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate-rirs", "Simulate a filtered RIR corpus");
  c_sim->add_option("--out", sim.out, "Output directory")->required();
  c_sim->add_option("--count", sim.count, "Number of RIRs to keep")->required();
  c_sim->add_option("--t60-min", sim.t60_min, "Minimum T60 in seconds")->capture_default_str();
  c_sim->add_option("--seed", sim.seed, "RNG seed")->capture_default_str();
  c_sim->add_option("--workers", sim.workers, std::string("Worker threads (default from ") + kWorkersEnv + " or 1)");

  PrepareArgs prep;
  auto* c_prep = app.add_subcommand("prepare-data", "Filter, segment and split a corpus of dry recordings");
  c_prep->add_option("--in", prep.in, "Directory of 16 kHz WAV files")->required();
  c_prep->add_option("--out", prep.out, "Output dataset directory")->required();
  c_prep->add_option("--mode", prep.mode, "Dryness enhancer: stage0 or model")->capture_default_str();
  c_prep->add_option("--enhancer", prep.enhancer, "Checkpoint used with --mode model");
  c_prep->add_option("--theta-window", prep.theta_window, "Per-window ratio threshold")->capture_default_str();
  c_prep->add_option("--theta-logmean", prep.theta_logmean, "Mean log-ratio threshold")->capture_default_str();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train or resume a dereverberation model");
  c_train->add_option("--config", tr.config, "JSON config; flags override its values");
  c_train->add_option("--mode", tr.mode, "paired or unpaired (overrides the config)");
  c_train->add_option("--preset", tr.preset, "Defaults before the config file: full or toy")->capture_default_str();
  c_train->add_option("--data", tr.data, "Prepared dataset directory")->required();
  c_train->add_option("--rirs", tr.rirs, "RIR corpus directory")->required();
  c_train->add_option("--out", tr.out, "Run directory (resumed when it holds a checkpoint)")->required();
  c_train->add_option("--eval-set", tr.eval_set, "Evaluation set scored every eval_every steps");
  c_train->add_option("--steps", tr.steps, "Total steps");
  c_train->add_option("--batch-size", tr.batch_size, "Batch size");
  c_train->add_option("--eval-every", tr.eval_every, "Evaluation period in steps (0 disables)");
  c_train->add_option("--checkpoint-every", tr.checkpoint_every, "Checkpoint period in steps");
  c_train->add_option("--seed", tr.seed, "RNG seed");

  EnhanceArgs en;
  auto* c_en = app.add_subcommand("enhance", "Dereverberate one WAV file");
  c_en->add_option("--ckpt", en.ckpt, "Training or generator checkpoint")->required();
  c_en->add_option("--in", en.in, "Input WAV (16 kHz mono)")->required();
  c_en->add_option("--out", en.out, "Output WAV")->required();

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Score a checkpoint and the unprocessed input on an evaluation set");
  c_ev->add_option("--ckpt", ev.ckpt, "Training or generator checkpoint")->required();
  c_ev->add_option("--eval-set", ev.eval_set, "Evaluation set directory")->required();
  c_ev->add_option("--report", ev.report, "CSV report path")->required();
  c_ev->add_option("--bootstrap", ev.bootstrap, "Bootstrap resamples")->capture_default_str();
  c_ev->add_option("--seed", ev.seed, "Bootstrap seed")->capture_default_str();

  std::string identity_out;
  auto* c_id = app.add_subcommand("identity-checkpoint", "Write a checkpoint that returns its input");
  c_id->add_option("--out", identity_out, "Checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*c_sim) return simulate_rirs(sim, out);
    if (*c_prep) return prepare_data(prep, out);
    if (*c_train) return train(tr, out);
    if (*c_en) return enhance(en, out);
    if (*c_ev) return evaluate(ev, out);
    if (*c_id) {
      save_identity_generator(identity_out);
      return kExitOk;
    }
  } catch (const ModeMismatchError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}

}  // namespace dereverb::cli
