// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "dereverb/nets/discriminator.hpp"
#include "dereverb/nets/generator.hpp"
#include "dereverb/random.hpp"

namespace dereverb::testing {

using TD = nn::Tensor<double>;
using Features = std::vector<std::vector<TD>>;

TD noise(nn::Shape s, std::uint64_t seed, double sigma = 0.3, bool grad = false) {
  Rng rng(seed);
  std::vector<double> v(nn::numel(s));
  for (auto& x : v) x = sigma * standard_normal(rng);
  return TD::from(std::move(s), std::move(v), grad);
}

TD constant(nn::Shape s, double c) { return TD::from(s, std::vector<double>(nn::numel(s), c)); }

std::vector<TD> score_maps(double c) { return {constant({2, 1, 7}, c), constant({2, 1, 4}, c), constant({2, 1, 2}, c)}; }

GeneratorConfig mini_generator() { return GeneratorConfig::toy({2, 3}); }

DiscriminatorConfig mini_discriminator() {
  DiscriminatorConfig c;
  c.input_channels = 2;
  c.channels = {2, 4, 4, 4};
  c.groups = {2, 2, 2, 4};
  c.post_channels = 4;
  return c;
}

template <class Net>
std::vector<std::pair<std::string, TD>> leaves(Net& net, const std::string& prefix) {
  std::vector<std::pair<std::string, TD>> out;
  net.params().set_requires_grad(true);
  for (auto& p : net.params().items()) out.emplace_back(prefix + p.name, p.tensor);
  return out;
}

template <class... L>
std::vector<std::pair<std::string, TD>> join(L... lists) {
  std::vector<std::pair<std::string, TD>> out;
  (out.insert(out.end(), lists.begin(), lists.end()), ...);
  return out;
}

// Random non-zero biases keep every unit away from exactly symmetric points.
template <class Net>
void jitter_biases(Net& net, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : net.params().items())
    if (p.name.size() > 5 && p.name.substr(p.name.size() - 5) == ".bias")
      for (auto& v : p.tensor.value()) v = 0.05 * standard_normal(rng);
}

Generator<double> make_generator(std::uint64_t seed) {
  Generator<double> g(mini_generator());
  g.init_params(seed);
  jitter_biases(g, seed + 100);
  return g;
}

MultiScaleDiscriminator<double> make_discriminator(std::uint64_t seed) {
  MultiScaleDiscriminator<double> d(mini_discriminator());
  d.init_params(seed);
  jitter_biases(d, seed + 200);
  return d;
}

// Direct-summation magnitude spectrogram with a periodic Hann window.
std::vector<double> direct_magnitudes(const std::vector<double>& x, std::size_t n, std::size_t hop) {
  const std::size_t frames = (x.size() - n) / hop + 1, bins = n / 2 + 1;
  std::vector<double> m(frames * bins);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t k = 0; k < bins; ++k) {
      double re = 0, im = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * i / n);
        const double a = 2 * std::numbers::pi * double((k * i) % n) / n;
        re += w * x[t * hop + i] * std::cos(a);
        im -= w * x[t * hop + i] * std::sin(a);
      }
      m[t * bins + k] = std::hypot(re, im);
    }
  return m;
}

double direct_spec_loss(const std::vector<double>& a, const std::vector<double>& b) {
  double total = 0;
  for (std::size_t n : {64, 128, 256, 512, 1024, 2048}) {
    const auto ma = direct_magnitudes(a, n, n / 4), mb = direct_magnitudes(b, n, n / 4);
    double lin = 0, lg = 0;
    for (std::size_t i = 0; i < ma.size(); ++i) {
      lin += std::abs(ma[i] - mb[i]);
      lg += std::abs(std::log(ma[i] + 1e-5) - std::log(mb[i] + 1e-5));
    }
    total += (lin + lg) / ma.size();
  }
  return total;
}

}  // namespace dereverb::testing
