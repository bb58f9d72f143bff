// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sstream>

#include "../../tools/cli.hpp"
#include "dereverb/data/synthetic_speech.hpp"

using namespace dereverb;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "dereverb");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("dereverb_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

const fs::path& rir_dir() {
  static const fs::path d = [] {
    auto p = fresh_dir("rirs");
    EXPECT_EQ(run({"simulate-rirs", "--out", p.string(), "--count", "4", "--seed", "5"}).code, 0);
    return p;
  }();
  return d;
}

// Clean synthetic recordings of 4 s; one extra 8 kHz file.
const fs::path& clean_corpus() {
  static const fs::path d = [] {
    auto p = fresh_dir("clean");
    for (int i = 0; i < 10; ++i) write_wav(p / ("spk" + std::to_string(i) + ".wav"), synthetic_speech(4.0, 40 + i));
    auto narrow = synthetic_speech(4.0, 99);
    narrow.sample_rate_hz = 8000;
    write_wav(p / "narrowband.wav", narrow);
    return p;
  }();
  return d;
}

const fs::path& dataset_dir() {
  static const fs::path d = [] {
    auto p = fresh_dir("dataset");
    EXPECT_EQ(run({"prepare-data", "--in", clean_corpus().string(), "--out", p.string()}).code, 0);
    return p;
  }();
  return d;
}

fs::path tiny_config_file(const fs::path& dir) {
  TrainConfig c = TrainConfig::toy(TrainMode::unpaired);
  c.batch_size = 2;
  c.crop_samples = 4096;
  c.generator = GeneratorConfig::toy({4, 6, 8, 8});
  c.discriminator.input_channels = 4;
  c.discriminator.channels = {8, 8, 16, 16};
  c.discriminator.groups = {2, 2, 4, 4};
  c.discriminator.post_channels = 16;
  c.eval_every = 0;
  auto j = c.to_json();
  j.erase("mode");
  write_text_atomic(dir / "config.json", j.dump(2));
  return dir / "config.json";
}

}  // namespace

TEST(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"no-such-command"}).code, cli::kExitUsage);
  const auto d = fresh_dir("usage");
  EXPECT_EQ(run({"simulate-rirs", "--out", d.string(), "--count", "0"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"simulate-rirs", "--out", d.string()}).code, cli::kExitUsage);
  EXPECT_EQ(run({"prepare-data", "--in", d.string(), "--out", d.string(), "--mode", "model"}).code,
            cli::kExitUsage);
  EXPECT_EQ(run({"--version"}).code, 0);
}

TEST(Cli, SimulateRirsIsReproducibleAndFiltered) {
  const auto again = fresh_dir("rirs_again");
  ASSERT_EQ(run({"simulate-rirs", "--out", again.string(), "--count", "4", "--seed", "5", "--workers", "2"}).code, 0);
  EXPECT_EQ(read_text(rir_dir() / "manifest.json"), read_text(again / "manifest.json"));
  for (const auto& e : read_rir_manifest(rir_dir())) {
    EXPECT_EQ(read_text(e.file), read_text(again / e.file.filename()));
    EXPECT_GE(e.t60_s, 0.4);
  }
  const auto m = read_json(rir_dir() / cli::kRunManifestName);
  EXPECT_EQ(m.at("command"), "simulate-rirs");
  EXPECT_EQ(m.at("seed"), 5);
  EXPECT_EQ(m.at("toolkit_version"), kToolkitVersion);
  for (const char* k : {"config", "started", "finished", "outputs"}) EXPECT_TRUE(m.contains(k)) << k;
}

TEST(Cli, PrepareDataAcceptsCleanAndRejectsReverberant) {
  const auto m = read_dataset_manifest(dataset_dir());
  std::size_t clean = 0, clean_ok = 0;
  for (const auto& s : m.sources) {
    if (s.file.find("narrowband") != std::string::npos) {
      EXPECT_FALSE(s.accepted);
      EXPECT_NE(s.reason.find("sample rate"), std::string::npos);
      continue;
    }
    ++clean;
    clean_ok += s.accepted;
  }
  EXPECT_GE(clean_ok, 0.9 * clean);

  const auto rev = fresh_dir("reverberant");
  const auto rirs = load_rir_corpus(rir_dir());
  for (int i = 0; i < 10; ++i) {
    const auto dry = synthetic_speech(4.0, 40 + i);
    write_wav(rev / ("spk" + std::to_string(i) + ".wav"), convolve_range(dry, rirs[i % rirs.size()].h, 0, dry.size()));
  }
  const auto out = fresh_dir("reverberant_out");
  ASSERT_EQ(run({"prepare-data", "--in", rev.string(), "--out", out.string()}).code, 0);
  EXPECT_LE(read_dataset_manifest(out).accepted_sources(), 1u);

  const auto again = fresh_dir("dataset_again");
  ASSERT_EQ(run({"prepare-data", "--in", clean_corpus().string(), "--out", again.string()}).code, 0);
  EXPECT_EQ(read_text(dataset_dir() / kDatasetManifestName), read_text(again / kDatasetManifestName));
}

TEST(Cli, TrainResumesAndAuditsHalves) {
  const auto d = fresh_dir("train");
  const auto cfg = tiny_config_file(d);
  const auto out = d / "run";
  auto train = [&](std::string steps, std::string mode) {
    return run({"train", "--config", cfg.string(), "--mode", mode, "--data", dataset_dir().string(), "--rirs",
                rir_dir().string(), "--out", out.string(), "--steps", steps, "--checkpoint-every", "2"});
  };
  ASSERT_EQ(train("2", "unpaired").code, 0);
  auto m = read_json(out / cli::kRunManifestName);
  EXPECT_EQ(m["details"]["data_audit"]["shared_utterances"], 0);
  EXPECT_GT(m["details"]["data_audit"]["half_a_clips"], 0);
  EXPECT_GT(m["details"]["data_audit"]["half_b_clips"], 0);
  EXPECT_EQ(m["config"]["total_steps"], 2);
  EXPECT_EQ(m["config"]["mode"], "unpaired");

  ASSERT_EQ(train("3", "unpaired").code, 0);
  m = read_json(out / cli::kRunManifestName);
  EXPECT_EQ(m["details"]["start_step"], 2);
  EXPECT_EQ(m["details"]["end_step"], 3);
  EXPECT_TRUE(m["details"]["resumed"].get<bool>());
  EXPECT_EQ(read_metrics_log(out / kMetricsLogFile).size(), 3u);

  EXPECT_EQ(train("4", "paired").code, cli::kExitUsage);
}

TEST(Cli, TrainDivergenceExitsWithThree) {
  const auto d = fresh_dir("diverge");
  fs::copy(dataset_dir(), d / "data", fs::copy_options::recursive);
  for (const auto& e : read_dataset_manifest(d / "data").clips) {
    Waveform w = read_wav(d / "data" / e.file);
    for (auto& v : w.samples) v = NAN;
    write_wav(d / "data" / e.file, w);
  }
  const auto r = run({"train", "--config", tiny_config_file(d).string(), "--mode", "paired", "--data",
                      (d / "data").string(), "--rirs", rir_dir().string(), "--out", (d / "run").string(),
                      "--steps", "1"});
  EXPECT_EQ(r.code, cli::kExitDivergence) << r.err;
  EXPECT_NE(r.err.find("diverged"), std::string::npos);
}

TEST(Cli, EnhancePreservesLengthAndIsDeterministic) {
  const auto d = fresh_dir("enhance");
  const auto cfg = tiny_config_file(d);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--mode", "paired", "--data", dataset_dir().string(), "--rirs",
                 rir_dir().string(), "--out", (d / "run").string(), "--steps", "1"})
                .code,
            0);
  write_wav(d / "in.wav", synthetic_speech(10.0, 3));
  const auto ckpt = (d / "run" / kCheckpointFile).string();
  ASSERT_EQ(run({"enhance", "--ckpt", ckpt, "--in", (d / "in.wav").string(), "--out", (d / "a.wav").string()}).code, 0);
  ASSERT_EQ(run({"enhance", "--ckpt", ckpt, "--in", (d / "in.wav").string(), "--out", (d / "b.wav").string()}).code, 0);
  EXPECT_EQ(read_wav(d / "a.wav").size(), 160000u);
  EXPECT_EQ(read_text(d / "a.wav"), read_text(d / "b.wav"));
  EXPECT_TRUE(fs::exists(d / cli::kRunManifestName));

  write_text_atomic(d / "broken.drvb", "DRVB garbage");
  EXPECT_EQ(run({"enhance", "--ckpt", (d / "broken.drvb").string(), "--in", (d / "in.wav").string(), "--out",
                 (d / "c.wav").string()})
                .code,
            cli::kExitIo);
  EXPECT_EQ(run({"enhance", "--ckpt", ckpt, "--in", (d / "missing.wav").string(), "--out", (d / "c.wav").string()})
                .code,
            cli::kExitIo);
}

TEST(Cli, EvaluateIdentityMatchesBaselineAndCountsSkips) {
  const auto d = fresh_dir("evaluate");
  const auto rirs = load_rir_corpus(rir_dir());
  std::vector<EvalPair> pairs;
  for (int i = 0; i < 3; ++i) {
    const auto dry = synthetic_speech(3.0, 500 + i);
    pairs.push_back({"utt" + std::to_string(i), convolve_range(dry, rirs[i].h, 0, dry.size()),
                     convolve_range(dry, early_reverb_target(rirs[i]).h, 0, dry.size())});
  }
  write_eval_set(d / "eval", pairs);
  fs::remove(d / "eval" / "reference" / "utt2.wav");
  ASSERT_EQ(run({"identity-checkpoint", "--out", (d / "id.drvb").string()}).code, 0);
  const auto r = run({"evaluate", "--ckpt", (d / "id.drvb").string(), "--eval-set", (d / "eval").string(),
                      "--report", (d / "report.csv").string(), "--bootstrap", "200"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("1 pairs skipped"), std::string::npos);

  std::istringstream csv(read_text(d / "report.csv"));
  std::vector<std::string> lines;
  for (std::string l; std::getline(csv, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 1 + 4 + 1 + 1 + 2u);
  EXPECT_EQ(lines[0], "system,utterance,fwsegsnr_db,sdr_db,estimated_t60_s");
  EXPECT_EQ(lines[6].rfind("system,fwsegsnr_db,fwsegsnr_ci95", 0), 0u);
  const auto model = lines[7], base = lines[8];
  EXPECT_EQ(model.rfind("model,", 0), 0u);
  EXPECT_EQ(base.rfind("no model,", 0), 0u);
  EXPECT_EQ(model.substr(model.find(',')), base.substr(base.find(',')));
  std::stringstream cells(model);
  std::vector<std::string> v;
  for (std::string c; std::getline(cells, c, ',');) v.push_back(c);
  for (std::size_t i : {2u, 4u}) EXPECT_FALSE(v[i].empty()) << i;
  const auto m = read_json(d / cli::kRunManifestName);
  EXPECT_EQ(m["details"]["skipped"], 1);
  EXPECT_TRUE(fs::exists(cli::summary_path(d / "report.csv")));
}
