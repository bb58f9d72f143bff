// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "json.hpp"

#include "dereverb/data/examples.hpp"
#include "dereverb/losses/losses.hpp"
#include "dereverb/nets/discriminator.hpp"
#include "dereverb/nets/generator.hpp"

namespace dereverb {

struct TrainConfig {
  TrainMode mode = TrainMode::unpaired;
  std::size_t batch_size = 32;
  double lr_generator = 1e-4;
  double lr_discriminator = 1e-3;
  std::size_t crop_samples = 8192;
  double gain_lo = 0.3, gain_hi = 1.0;
  LossWeights loss_weights{};
  double paired_feature_weight = kPairedFeatureWeight;
  double beta1 = 0.5, beta2 = 0.9;
  double clip_norm = 0.0;  // 0 disables; for divergence triage only
  std::size_t total_steps = 100000;
  std::size_t eval_every = 1000;       // 0 disables
  std::size_t checkpoint_every = 1000;  // the final step is always checkpointed
  std::uint64_t rng_seed = 0;
  GeneratorConfig generator = GeneratorConfig::full();
  DiscriminatorConfig discriminator = DiscriminatorConfig::full();

  /// Desk-scale settings: four-block generator, narrow discriminators.
  static TrainConfig toy(TrainMode mode) {
    TrainConfig c;
    c.mode = mode;
    c.batch_size = 4;
    c.total_steps = 2000;
    c.eval_every = 500;
    c.checkpoint_every = 250;
    c.generator = GeneratorConfig::toy();
    c.discriminator = DiscriminatorConfig::toy();
    return c;
  }

  ExampleOptions example_options() const { return {crop_samples, gain_lo, gain_hi}; }

  void validate() const {
    if (batch_size == 0) throw InvalidArgument("batch_size must be at least 1");
    if (!(lr_generator > 0) || !(lr_discriminator > 0)) throw InvalidArgument("learning rates must be positive");
    if (crop_samples < kMinDiscriminatorInput)
      throw InvalidArgument("crop_samples must be at least " + std::to_string(kMinDiscriminatorInput));
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw InvalidArgument("Adam betas must lie in [0, 1)");
    if (clip_norm < 0 || paired_feature_weight < 0) throw InvalidArgument("negative clip norm or feature weight");
    if (checkpoint_every == 0) throw InvalidArgument("checkpoint_every must be positive");
    example_options().validate();
    loss_weights.validate();
    generator.validate();
    discriminator.validate();
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["mode"] = to_string(mode);
    j["batch_size"] = batch_size;
    j["lr_generator"] = lr_generator;
    j["lr_discriminator"] = lr_discriminator;
    j["crop_samples"] = crop_samples;
    j["gain_range"] = {gain_lo, gain_hi};
    j["loss_weights"] = loss_weights.to_json();
    j["paired_feature_weight"] = paired_feature_weight;
    j["adam_betas"] = {beta1, beta2};
    j["clip_norm"] = clip_norm;
    j["total_steps"] = total_steps;
    j["eval_every"] = eval_every;
    j["checkpoint_every"] = checkpoint_every;
    j["rng_seed"] = rng_seed;
    j["generator"] = generator.to_json();
    j["discriminator"] = discriminator.to_json();
    return j;
  }

  /// Fields missing from `j` keep the values already in `base`.
  static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig()); }
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base) {
    TrainConfig c = std::move(base);
    try {
      if (j.contains("mode")) c.mode = train_mode_from_string(j["mode"]);
      c.batch_size = j.value("batch_size", c.batch_size);
      c.lr_generator = j.value("lr_generator", c.lr_generator);
      c.lr_discriminator = j.value("lr_discriminator", c.lr_discriminator);
      c.crop_samples = j.value("crop_samples", c.crop_samples);
      if (j.contains("gain_range")) {
        c.gain_lo = j["gain_range"].at(0);
        c.gain_hi = j["gain_range"].at(1);
      }
      if (j.contains("loss_weights")) c.loss_weights = LossWeights::from_json(j["loss_weights"]);
      c.paired_feature_weight = j.value("paired_feature_weight", c.paired_feature_weight);
      if (j.contains("adam_betas")) {
        c.beta1 = j["adam_betas"].at(0);
        c.beta2 = j["adam_betas"].at(1);
      }
      c.clip_norm = j.value("clip_norm", c.clip_norm);
      c.total_steps = j.value("total_steps", c.total_steps);
      c.eval_every = j.value("eval_every", c.eval_every);
      c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
      c.rng_seed = j.value("rng_seed", c.rng_seed);
      if (j.contains("generator")) {
        if (j["generator"].is_string()) {
          const std::string preset = j["generator"];
          if (preset == "full") c.generator = GeneratorConfig::full();
          else if (preset == "toy") c.generator = GeneratorConfig::toy();
          else throw InvalidArgument("unknown generator preset '" + preset + "'");
        } else {
          c.generator = GeneratorConfig::from_json(j["generator"]);
        }
      }
      if (j.contains("discriminator")) {
        if (j["discriminator"].is_string()) {
          const std::string preset = j["discriminator"];
          if (preset == "full") c.discriminator = DiscriminatorConfig::full();
          else if (preset == "toy") c.discriminator = DiscriminatorConfig::toy();
          else throw InvalidArgument("unknown discriminator preset '" + preset + "'");
        } else {
          c.discriminator = DiscriminatorConfig::from_json(j["discriminator"]);
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(std::string("malformed training config: ") + e.what());
    }
    c.validate();
    return c;
  }

  /// Hash of everything except the schedule fields, which may change on resume.
  std::uint64_t model_hash() const {
    auto j = to_json();
    for (const char* k : {"total_steps", "eval_every", "checkpoint_every"}) j.erase(k);
    return stable_hash(j.dump());
  }
};

}  // namespace dereverb
