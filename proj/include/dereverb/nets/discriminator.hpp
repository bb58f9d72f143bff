// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "json.hpp"

#include "dereverb/nn/conv.hpp"
#include "dereverb/nn/params.hpp"

namespace dereverb {

/// One waveform sub-discriminator: input conv, four grouped strided convs, a
/// wide conv and a one-channel score conv, all weight-normalized.
struct DiscriminatorConfig {
  std::size_t input_channels = 16;
  std::size_t input_kernel = 15;
  std::vector<std::size_t> channels = {64, 256, 1024, 1024};
  std::vector<std::size_t> groups = {4, 16, 64, 256};
  std::size_t grouped_kernel = 41;
  std::size_t grouped_stride = 4;
  std::size_t post_channels = 1024;
  std::size_t post_kernel = 5;
  std::size_t score_kernel = 3;
  double slope = 0.2;

  static DiscriminatorConfig full() { return {}; }
  static DiscriminatorConfig toy() {
    DiscriminatorConfig c;
    c.input_channels = 8;
    c.channels = {16, 32, 64, 64};
    c.groups = {2, 4, 8, 16};
    c.post_channels = 64;
    return c;
  }

  void validate() const {
    if (channels.size() != groups.size() || channels.empty())
      throw InvalidArgument("discriminator config: channels and groups must match");
    std::size_t in = input_channels;
    for (std::size_t i = 0; i < channels.size(); ++i) {
      if (groups[i] == 0 || in % groups[i] || channels[i] % groups[i])
        throw InvalidArgument("discriminator config: groups must divide channel counts");
      in = channels[i];
    }
  }
  nlohmann::json to_json() const {
    return {{"input_channels", input_channels}, {"input_kernel", input_kernel}, {"channels", channels},
            {"groups", groups}, {"grouped_kernel", grouped_kernel}, {"grouped_stride", grouped_stride},
            {"post_channels", post_channels}, {"post_kernel", post_kernel}, {"score_kernel", score_kernel},
            {"slope", slope}};
  }
  static DiscriminatorConfig from_json(const nlohmann::json& j) {
    DiscriminatorConfig c;
    c.input_channels = j.at("input_channels");
    c.input_kernel = j.at("input_kernel");
    c.channels = j.at("channels").get<std::vector<std::size_t>>();
    c.groups = j.at("groups").get<std::vector<std::size_t>>();
    c.grouped_kernel = j.at("grouped_kernel");
    c.grouped_stride = j.at("grouped_stride");
    c.post_channels = j.at("post_channels");
    c.post_kernel = j.at("post_kernel");
    c.score_kernel = j.at("score_kernel");
    c.slope = j.at("slope");
    c.validate();
    return c;
  }
  std::size_t feature_layers() const { return channels.size() + 1; }
};

inline constexpr std::size_t kDiscriminatorScales = 3;
inline constexpr std::size_t kMinDiscriminatorInput = 4096;

template <class T>
struct DiscriminatorOutput {
  std::vector<nn::Tensor<T>> scores;                 // per scale, [N, 1, L_s]
  std::vector<std::vector<nn::Tensor<T>>> features;  // per scale, per hidden layer
};

/// Three sub-discriminators on the waveform, its x2 and its x4 average-pooled
/// versions. Sub-discriminators share the layout but not parameters.
template <class T>
class MultiScaleDiscriminator {
 public:
  using Tensor = nn::Tensor<T>;

  MultiScaleDiscriminator() = default;
  MultiScaleDiscriminator(const MultiScaleDiscriminator&) = delete;
  MultiScaleDiscriminator& operator=(const MultiScaleDiscriminator&) = delete;
  MultiScaleDiscriminator(MultiScaleDiscriminator&&) = default;
  MultiScaleDiscriminator& operator=(MultiScaleDiscriminator&&) = default;

  explicit MultiScaleDiscriminator(DiscriminatorConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    for (std::size_t s = 0; s < kDiscriminatorScales; ++s) {
      const std::string p = "scale" + std::to_string(s) + ".";
      add_layer(p + "input", cfg_.input_channels, 1, cfg_.input_kernel);
      std::size_t in = cfg_.input_channels;
      for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
        add_layer(p + "grouped" + std::to_string(i + 1), cfg_.channels[i], in / cfg_.groups[i],
                  cfg_.grouped_kernel);
        in = cfg_.channels[i];
      }
      add_layer(p + "post", cfg_.post_channels, in, cfg_.post_kernel);
      add_layer(p + "score", 1, cfg_.post_channels, cfg_.score_kernel);
    }
  }

  const DiscriminatorConfig& config() const { return cfg_; }
  nn::ParamList<T>& params() { return params_; }
  const nn::ParamList<T>& params() const { return params_; }

  MultiScaleDiscriminator clone() const {
    MultiScaleDiscriminator d(cfg_);
    for (std::size_t i = 0; i < params_.size(); ++i) d.params_[i].value() = params_.items()[i].tensor.value();
    return d;
  }

  /// Direction vectors N(0, 1/fan_in), gains set to their norms (so the
  /// effective weight starts equal to the direction), zero biases.
  void init_params(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0xd15c));
    for (std::size_t i = 0; i < params_.size(); i += 3) {
      auto& v = params_[i];
      auto& g = params_[i + 1];
      auto& b = params_[i + 2];
      const std::size_t out = v.dim(0), per = v.size() / out;
      init_fan_in(v, per, rng);
      for (std::size_t o = 0; o < out; ++o) {
        double s = 0;
        for (std::size_t j = 0; j < per; ++j) s += double(v.value()[o * per + j]) * v.value()[o * per + j];
        g.value()[o] = static_cast<T>(std::sqrt(s));
      }
      std::fill(b.value().begin(), b.value().end(), T(0));
    }
  }

  /// x [N, L] with L >= 4096.
  DiscriminatorOutput<T> forward(const Tensor& x) const {
    if (x.rank() != 2) throw InvalidArgument("discriminator expects [N, L]");
    if (x.dim(1) < kMinDiscriminatorInput) throw InvalidArgument("discriminator input too short");
    DiscriminatorOutput<T> out;
    auto h = nn::reshape(x, {x.dim(0), 1, x.dim(1)});
    for (std::size_t s = 0; s < kDiscriminatorScales; ++s) {
      if (s > 0) h = downsample(h);
      auto [score, feats] = sub_forward(s, h);
      out.scores.push_back(std::move(score));
      out.features.push_back(std::move(feats));
    }
    return out;
  }

  DiscriminatorOutput<T> operator()(const Tensor& x) const { return forward(x); }

  /// The x2 pooling used between scales (kernel 4, stride 2, padding 1).
  static Tensor downsample(const Tensor& x) { return nn::avg_pool1d(x, 4, 2, 1); }

 private:
  std::pair<Tensor, std::vector<Tensor>> sub_forward(std::size_t scale, const Tensor& x) const {
    const std::size_t per_scale = params_.size() / kDiscriminatorScales;
    std::size_t k = scale * per_scale;
    auto layer = [&](const Tensor& in, std::size_t stride, std::size_t groups) {
      const auto& v = params_.items()[k].tensor;
      const auto& g = params_.items()[k + 1].tensor;
      const auto& b = params_.items()[k + 2].tensor;
      k += 3;
      const std::size_t kernel = v.dim(2);
      return nn::conv1d(in, nn::weight_norm(v, g), b, stride, kernel / 2, groups);
    };
    const T slope = static_cast<T>(cfg_.slope);
    std::vector<Tensor> feats;
    auto h = nn::leaky_relu(layer(x, 1, 1), slope);
    for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
      h = nn::leaky_relu(layer(h, cfg_.grouped_stride, cfg_.groups[i]), slope);
      feats.push_back(h);
    }
    h = nn::leaky_relu(layer(h, 1, 1), slope);
    feats.push_back(h);
    return {layer(h, 1, 1), std::move(feats)};
  }

  void add_layer(const std::string& name, std::size_t out, std::size_t in_per_group, std::size_t kernel) {
    params_.add(name + ".weight_v", {out, in_per_group, kernel});
    params_.add(name + ".weight_g", {out});
    params_.add(name + ".bias", {out});
  }

  DiscriminatorConfig cfg_;
  nn::ParamList<T> params_;
};

}  // namespace dereverb
