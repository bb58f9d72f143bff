// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "dereverb/losses/losses.hpp"
#include "dereverb/nets/checkpoint.hpp"
#include "dereverb/nn/adam.hpp"
#include "dereverb/training/config.hpp"

namespace dereverb {

inline constexpr const char* kTrainingCheckpointFormat = "dereverb-training";
inline constexpr const char* kGeneratorCheckpointFormat = "dereverb-generator";

/// A checkpoint was written in the other training mode.
class ModeMismatchError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss; carries the report of the failing step.
class TrainingDivergence : public DivergenceError {
 public:
  TrainingDivergence(const std::string& term, LossReport r)
      : DivergenceError("non-finite loss " + term + " in step report " + r.to_json().dump()), report(std::move(r)) {}
  LossReport report;
};

/// Networks, optimizers and step counter of one training run. Unpaired mode
/// holds both generators and both discriminators; paired mode only G_{R->D}
/// and D_D.
template <class T = float>
class Trainer {
 public:
  using Tensor = nn::Tensor<T>;

  explicit Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const bool unpaired = cfg_.mode == TrainMode::unpaired;
    g_rd_ = make_net<Generator<T>>(cfg_.generator, 1);
    d_d_ = make_net<MultiScaleDiscriminator<T>>(cfg_.discriminator, 3);
    if (unpaired) {
      g_dr_ = make_net<Generator<T>>(cfg_.generator, 2);
      d_r_ = make_net<MultiScaleDiscriminator<T>>(cfg_.discriminator, 4);
    }
    const nn::AdamOptions og{cfg_.lr_generator, cfg_.beta1, cfg_.beta2, 1e-8, cfg_.clip_norm};
    const nn::AdamOptions od{cfg_.lr_discriminator, cfg_.beta1, cfg_.beta2, 1e-8, cfg_.clip_norm};
    opt_g_rd_ = nn::Adam<T>(g_rd_->params(), og);
    opt_d_d_ = nn::Adam<T>(d_d_->params(), od);
    if (unpaired) {
      opt_g_dr_ = nn::Adam<T>(g_dr_->params(), og);
      opt_d_r_ = nn::Adam<T>(d_r_->params(), od);
    }
  }
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const TrainConfig& config() const { return cfg_; }
  std::size_t step() const { return step_; }
  Generator<T>& g_rd() { return *g_rd_; }
  Generator<T>& g_dr() { return require(g_dr_, "G_{D->R}"); }
  MultiScaleDiscriminator<T>& d_d() { return *d_d_; }
  MultiScaleDiscriminator<T>& d_r() { return require(d_r_, "D_R"); }

  /// One discriminator update followed by one generator update.
  LossReport train_step(const std::vector<TrainingExample>& batch) {
    LossReport r = update_discriminators(batch);
    for (const auto& kv : update_generators(batch).values) r.set(kv.first, kv.second);
    ++step_;
    return r;
  }

  /// Discriminator update against detached generator outputs; generators frozen.
  LossReport update_discriminators(const std::vector<TrainingExample>& batch) {
    const Batch b = prepare(batch);
    LossReport rep;
    train_generators(false);
    Tensor fake_d, fake_r;
    {
      nn::NoGradGuard guard;
      fake_d = (*g_rd_)(b.x_r);
      if (g_dr_) fake_r = (*g_dr_)(b.y_d);
    }
    const auto l_dd = hinge_disc_loss((*d_d_)(b.y_d).scores, (*d_d_)(fake_d).scores);
    rep.set("disc_d", l_dd.item());
    Tensor l_d = l_dd;
    if (d_r_) {
      const auto l_dr = hinge_disc_loss((*d_r_)(b.x_r).scores, (*d_r_)(fake_r).scores);
      rep.set("disc_r", l_dr.item());
      l_d = nn::add(l_dd, l_dr);
    }
    rep.set("disc_total", l_d.item());
    check_finite(rep);
    l_d.backward();
    opt_d_d_.step();
    if (d_r_) opt_d_r_.step();
    return rep;
  }

  /// Generator update; discriminators frozen (gradients pass through them to
  /// the generators but are not accumulated on their parameters).
  LossReport update_generators(const std::vector<TrainingExample>& batch) {
    const Batch b = prepare(batch);
    LossReport rep;
    train_generators(true);
    Tensor total;
    if (cfg_.mode == TrainMode::unpaired) {
      const auto terms = unpaired_generator_terms(*g_rd_, *g_dr_, *d_r_, *d_d_, b.x_r, b.y_d);
      const auto v = terms.values();
      rep.set("gen_r2d", v.gen_r2d);
      rep.set("gen_d2r", v.gen_d2r);
      rep.set("cycle_r", v.cycle_r);
      rep.set("cycle_d", v.cycle_d);
      rep.set("featcycle_r", v.featcycle_r);
      rep.set("featcycle_d", v.featcycle_d);
      rep.set("id_d", v.id_d);
      total = terms.total(cfg_.loss_weights);
    } else {
      const auto t = paired_loss(*g_rd_, *d_d_, b.x_r, b.y_d, cfg_.paired_feature_weight);
      rep.set("gen_r2d", t.hinge.item());
      rep.set("feat_paired", t.feature.item());
      total = t.total;
    }
    rep.set("gen_total", total.item());
    try {
      check_finite(rep);
    } catch (...) {
      train_generators(false);
      throw;
    }
    total.backward();
    opt_g_rd_.step();
    if (g_dr_) opt_g_dr_.step();
    train_generators(false);
    return rep;
  }

  /// Writes networks, optimizer moments, step and `extra` (e.g. the stream position).
  void save(const std::filesystem::path& path, const nlohmann::json& extra = nlohmann::json::object()) const {
    ArchiveWriter w;
    nlohmann::json opt_steps = nlohmann::json::object();
    for_each_net([&](const std::string& name, auto& net, nn::Adam<T>& opt) {
      w.add_params(name + ".", net.params());
      for (std::size_t i = 0; i < net.params().size(); ++i) {
        const auto& shape = net.params()[i].shape();
        w.add(name + ".adam_m." + std::to_string(i), shape, opt.first_moments()[i]);
        w.add(name + ".adam_v." + std::to_string(i), shape, opt.second_moments()[i]);
      }
      opt_steps[name] = opt.step_count();
    });
    w.state() = {{"format", kTrainingCheckpointFormat},
                 {"mode", to_string(cfg_.mode)},
                 {"step", step_},
                 {"config", cfg_.to_json()},
                 {"model_hash", cfg_.model_hash()},
                 {"optimizer_steps", opt_steps},
                 {"extra", extra}};
    w.write(path);
  }

  /// Restores a checkpoint written by save(); returns its `extra` record.
  nlohmann::json load(const std::filesystem::path& path) {
    ArchiveReader r(path);
    const auto& st = r.state();
    if (st.value("format", "") != kTrainingCheckpointFormat)
      throw IoError(path.string() + ": not a training checkpoint");
    const std::string mode = st.at("mode");
    if (mode != to_string(cfg_.mode))
      throw ModeMismatchError(path.string() + ": checkpoint was trained in " + mode + " mode, requested " +
                              to_string(cfg_.mode));
    if (st.at("model_hash").get<std::uint64_t>() != cfg_.model_hash())
      throw InvalidArgument(path.string() + ": checkpoint configuration differs from the requested configuration");
    for_each_net([&](const std::string& name, auto& net, nn::Adam<T>& opt) {
      r.load_params(name + ".", net.params());
      for (std::size_t i = 0; i < net.params().size(); ++i) {
        opt.first_moments()[i] = r.get<double>(name + ".adam_m." + std::to_string(i));
        opt.second_moments()[i] = r.get<double>(name + ".adam_v." + std::to_string(i));
        if (opt.first_moments()[i].size() != net.params()[i].size() ||
            opt.second_moments()[i].size() != net.params()[i].size())
          throw IoError(path.string() + ": optimizer state size mismatch for " + name);
      }
      opt.set_step_count(st.at("optimizer_steps").at(name).get<long long>());
    });
    step_ = st.at("step");
    return st.value("extra", nlohmann::json::object());
  }

 private:
  template <class Net, class Cfg>
  std::unique_ptr<Net> make_net(const Cfg& c, std::uint64_t lane) {
    auto n = std::make_unique<Net>(c);
    n->init_params(derive_seed(cfg_.rng_seed, lane));
    return n;
  }
  template <class P>
  static auto& require(const std::unique_ptr<P>& p, const char* what) {
    if (!p) throw InvalidArgument(std::string(what) + " exists only in unpaired mode");
    return *p;
  }

  template <class F>
  void for_each_net(F&& f) const {
    auto* self = const_cast<Trainer*>(this);
    f("g_rd", *self->g_rd_, self->opt_g_rd_);
    f("d_d", *self->d_d_, self->opt_d_d_);
    if (g_dr_) f("g_dr", *self->g_dr_, self->opt_g_dr_);
    if (d_r_) f("d_r", *self->d_r_, self->opt_d_r_);
  }

  void train_generators(bool on) {
    g_rd_->params().set_requires_grad(on);
    if (g_dr_) g_dr_->params().set_requires_grad(on);
    d_d_->params().set_requires_grad(!on);
    if (d_r_) d_r_->params().set_requires_grad(!on);
  }

  static void check_finite(const LossReport& r) {
    const auto bad = r.first_non_finite();
    if (!bad.empty()) throw TrainingDivergence(bad, r);
  }

  struct Batch {
    Tensor x_r, y_d;  // paired mode: y_d holds the aligned targets
  };

  Batch prepare(const std::vector<TrainingExample>& batch) const {
    if (batch.empty()) throw InvalidArgument("empty batch");
    std::vector<const Waveform*> xs, ys;
    for (const auto& ex : batch) {
      if (ex.mode != cfg_.mode) throw ModeMismatchError("batch example mode does not match the trainer mode");
      if (cfg_.mode == TrainMode::paired && !ex.paired_target) throw InvalidArgument("paired example without target");
      xs.push_back(&ex.x_r);
      ys.push_back(cfg_.mode == TrainMode::paired ? &*ex.paired_target : &ex.y_d);
    }
    return {stack_batch<T>(xs), stack_batch<T>(ys)};
  }

  TrainConfig cfg_;
  std::unique_ptr<Generator<T>> g_rd_, g_dr_;
  std::unique_ptr<MultiScaleDiscriminator<T>> d_d_, d_r_;
  nn::Adam<T> opt_g_rd_, opt_g_dr_, opt_d_d_, opt_d_r_;
  std::size_t step_ = 0;
};

/// Inference checkpoint holding only G_{R->D}, or an identity marker.
template <class T>
void save_generator(const std::filesystem::path& path, const Generator<T>& g) {
  ArchiveWriter w;
  w.add_params("g_rd.", g.params());
  w.state() = {{"format", kGeneratorCheckpointFormat}, {"identity", false}, {"generator", g.config().to_json()}};
  w.write(path);
}

inline void save_identity_generator(const std::filesystem::path& path) {
  ArchiveWriter w;
  w.state() = {{"format", kGeneratorCheckpointFormat}, {"identity", true}};
  w.write(path);
}

/// Waveform enhancer from either checkpoint kind. Training checkpoints yield
/// their G_{R->D}; identity checkpoints return the input unchanged.
template <class T = float>
struct LoadedEnhancer {
  std::shared_ptr<Generator<T>> generator;  // null for identity checkpoints
  std::string source_format;

  Waveform operator()(const Waveform& w) const { return generator ? generator->enhance(w) : w; }
};

template <class T = float>
LoadedEnhancer<T> load_enhancer(const std::filesystem::path& path) {
  ArchiveReader r(path);
  const auto& st = r.state();
  LoadedEnhancer<T> e;
  try {
    e.source_format = st.at("format");
    GeneratorConfig gc;
    if (e.source_format == kGeneratorCheckpointFormat) {
      if (st.at("identity").get<bool>()) return e;
      gc = GeneratorConfig::from_json(st.at("generator"));
    } else if (e.source_format == kTrainingCheckpointFormat) {
      gc = GeneratorConfig::from_json(st.at("config").at("generator"));
    } else {
      throw IoError(path.string() + ": unknown checkpoint format " + e.source_format);
    }
    e.generator = std::make_shared<Generator<T>>(gc);
  } catch (const nlohmann::json::exception& ex) {
    throw IoError(path.string() + ": malformed checkpoint state (" + ex.what() + ")");
  } catch (const InvalidArgument& ex) {
    throw IoError(path.string() + ": " + ex.what());
  }
  r.load_params("g_rd.", e.generator->params());
  return e;
}

}  // namespace dereverb
