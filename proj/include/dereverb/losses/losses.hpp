// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dereverb/dsp/waveform.hpp"
#include "dereverb/nets/discriminator.hpp"
#include "dereverb/nn/spectral.hpp"

namespace dereverb {

struct LossWeights {
  double gan = 1.0;
  double cycle = 0.1;
  double feat = 1.0;
  double id = 0.5;

  void validate() const {
    for (double v : {gan, cycle, feat, id})
      if (!(v >= 0) || !std::isfinite(v)) throw InvalidArgument("loss weights must be finite and non-negative");
  }
  nlohmann::json to_json() const { return {{"gan", gan}, {"cycle", cycle}, {"feat", feat}, {"id", id}}; }
  static LossWeights from_json(const nlohmann::json& j) {
    LossWeights w;
    w.gan = j.value("gan", w.gan);
    w.cycle = j.value("cycle", w.cycle);
    w.feat = j.value("feat", w.feat);
    w.id = j.value("id", w.id);
    w.validate();
    return w;
  }
};

inline constexpr std::array<std::size_t, 6> kSpectralLossFftSizes = {64, 128, 256, 512, 1024, 2048};
inline constexpr double kSpectralLossEps = 1e-5;
inline constexpr double kPairedFeatureWeight = 100.0;

/// Generator hinge term: mean over scales of mean(max(0, 1 - s)).
template <class T>
nn::Tensor<T> hinge_gen_loss(const std::vector<nn::Tensor<T>>& scores) {
  if (scores.empty()) throw InvalidArgument("hinge_gen_loss: no score maps");
  nn::Tensor<T> total;
  for (const auto& s : scores) {
    auto term = nn::mean(nn::relu(nn::add_scalar(nn::scale(s, T(-1)), T(1))));
    total = total.defined() ? nn::add(total, term) : term;
  }
  return nn::scale(total, T(1) / static_cast<T>(scores.size()));
}

/// Discriminator hinge: mean over scales of mean(max(0, 1 - s_real)) + mean(max(0, 1 + s_fake)).
template <class T>
nn::Tensor<T> hinge_disc_loss(const std::vector<nn::Tensor<T>>& real, const std::vector<nn::Tensor<T>>& fake) {
  if (real.size() != fake.size() || real.empty()) throw InvalidArgument("hinge_disc_loss: scale count mismatch");
  nn::Tensor<T> total;
  for (std::size_t s = 0; s < real.size(); ++s) {
    auto term = nn::add(nn::mean(nn::relu(nn::add_scalar(nn::scale(real[s], T(-1)), T(1)))),
                        nn::mean(nn::relu(nn::add_scalar(fake[s], T(1)))));
    total = total.defined() ? nn::add(total, term) : term;
  }
  return nn::scale(total, T(1) / static_cast<T>(real.size()));
}

/// Sum over FFT sizes of mean|M_a - M_b| + mean|log(M_a + eps) - log(M_b + eps)|,
/// hop = size / 4. Inputs [N, L]; sizes longer than L are skipped.
template <class T>
nn::Tensor<T> multiscale_spec_loss(const nn::Tensor<T>& a, const nn::Tensor<T>& b) {
  if (a.shape() != b.shape()) throw InvalidArgument("multiscale_spec_loss: shape mismatch");
  if (a.rank() != 2) throw InvalidArgument("multiscale_spec_loss expects [N, L]");
  nn::Tensor<T> total;
  const T eps = static_cast<T>(kSpectralLossEps);
  for (std::size_t n_fft : kSpectralLossFftSizes) {
    if (n_fft > a.dim(1)) continue;
    const auto ma = nn::magnitude_stft(a, n_fft, n_fft / 4);
    const auto mb = nn::magnitude_stft(b, n_fft, n_fft / 4);
    auto term = nn::add(nn::mean(nn::abs(nn::sub(ma, mb))),
                        nn::mean(nn::abs(nn::sub(nn::log(nn::add_scalar(ma, eps)), nn::log(nn::add_scalar(mb, eps))))));
    total = total.defined() ? nn::add(total, term) : term;
  }
  if (!total.defined()) throw InvalidArgument("multiscale_spec_loss: input shorter than the smallest FFT size");
  return total;
}

inline double multiscale_spec_loss(const Waveform& a, const Waveform& b) {
  if (a.size() != b.size()) throw InvalidArgument("multiscale_spec_loss: length mismatch");
  nn::NoGradGuard guard;
  using TD = nn::Tensor<double>;
  return multiscale_spec_loss(TD::from({1, a.size()}, a.samples), TD::from({1, b.size()}, b.samples)).item();
}

/// Feature L1: for each scale, the sum over layers of mean|f_a - f_b|, averaged over scales.
template <class T>
nn::Tensor<T> feature_loss(const std::vector<std::vector<nn::Tensor<T>>>& fa,
                           const std::vector<std::vector<nn::Tensor<T>>>& fb) {
  if (fa.size() != fb.size() || fa.empty()) throw InvalidArgument("feature_loss: scale count mismatch");
  nn::Tensor<T> total;
  for (std::size_t s = 0; s < fa.size(); ++s) {
    if (fa[s].size() != fb[s].size()) throw InvalidArgument("feature_loss: layer count mismatch");
    for (std::size_t l = 0; l < fa[s].size(); ++l) {
      if (fa[s][l].shape() != fb[s][l].shape())
        throw InvalidArgument("feature_loss: shape mismatch at scale " + std::to_string(s) + " layer " +
                              std::to_string(l));
      auto term = nn::mean(nn::abs(nn::sub(fa[s][l], fb[s][l])));
      total = total.defined() ? nn::add(total, term) : term;
    }
  }
  return nn::scale(total, T(1) / static_cast<T>(fa.size()));
}

/// Reconstruction after a round trip through both generators, in both directions.
template <class T, class Grd, class Gdr>
std::pair<nn::Tensor<T>, nn::Tensor<T>> cycle_losses(const Grd& g_rd, const Gdr& g_dr, const nn::Tensor<T>& x_r,
                                                     const nn::Tensor<T>& y_d) {
  return {multiscale_spec_loss(g_dr(g_rd(x_r)), x_r), multiscale_spec_loss(g_rd(g_dr(y_d)), y_d)};
}

/// Discriminator-feature distance between cycle reconstructions and originals.
template <class T, class Dr, class Dd>
std::pair<nn::Tensor<T>, nn::Tensor<T>> feature_cycle_losses(const Dr& d_r, const Dd& d_d, const nn::Tensor<T>& x_r,
                                                             const nn::Tensor<T>& x_r_cycled,
                                                             const nn::Tensor<T>& y_d,
                                                             const nn::Tensor<T>& y_d_cycled) {
  return {feature_loss(d_r(x_r_cycled).features, d_r(x_r).features),
          feature_loss(d_d(y_d_cycled).features, d_d(y_d).features)};
}

/// Dry input through the dereverberation generator should come back unchanged.
/// Only G_{R->D} has this term.
template <class T, class Grd>
nn::Tensor<T> identity_loss(const Grd& g_rd, const nn::Tensor<T>& y_d) {
  return multiscale_spec_loss(g_rd(y_d), y_d);
}

/// Scalar components of the generator objective.
struct GeneratorLossComponents {
  double gen_r2d = 0, gen_d2r = 0;
  double cycle_r = 0, cycle_d = 0;
  double featcycle_r = 0, featcycle_d = 0;
  double id_d = 0;
};

namespace detail {
template <class V>
V weighted_generator_sum(const V& gr, const V& gd, const V& cr, const V& cd, const V& fr, const V& fd, const V& id,
                         const LossWeights& w) {
  return w.gan * (gr + gd) + w.cycle * (cr + cd) + w.feat * (fr + fd) + w.id * id;
}
}  // namespace detail

/// Weighted generator objective; throws naming the first non-finite component.
inline double total_generator_loss(const GeneratorLossComponents& c, const LossWeights& w) {
  const std::pair<const char*, double> terms[] = {{"gen_r2d", c.gen_r2d},         {"gen_d2r", c.gen_d2r},
                                                  {"cycle_r", c.cycle_r},         {"cycle_d", c.cycle_d},
                                                  {"featcycle_r", c.featcycle_r}, {"featcycle_d", c.featcycle_d},
                                                  {"id_d", c.id_d}};
  for (const auto& [name, v] : terms)
    if (!std::isfinite(v)) throw DivergenceError(std::string("non-finite loss component ") + name);
  return detail::weighted_generator_sum(c.gen_r2d, c.gen_d2r, c.cycle_r, c.cycle_d, c.featcycle_r, c.featcycle_d,
                                        c.id_d, w);
}

/// Differentiable counterpart of total_generator_loss.
template <class T>
struct GeneratorLossTerms {
  nn::Tensor<T> gen_r2d, gen_d2r, cycle_r, cycle_d, featcycle_r, featcycle_d, id_d;

  GeneratorLossComponents values() const {
    return {gen_r2d.item(), gen_d2r.item(), cycle_r.item(), cycle_d.item(), featcycle_r.item(), featcycle_d.item(),
            id_d.item()};
  }
  nn::Tensor<T> total(const LossWeights& w) const {
    auto term = [](const nn::Tensor<T>& t, double k) { return nn::scale(t, static_cast<T>(k)); };
    return nn::add(nn::add(nn::add(term(gen_r2d, w.gan), term(gen_d2r, w.gan)),
                           nn::add(term(cycle_r, w.cycle), term(cycle_d, w.cycle))),
                   nn::add(nn::add(term(featcycle_r, w.feat), term(featcycle_d, w.feat)), term(id_d, w.id)));
  }
};

/// All unpaired generator terms for one batch.
template <class T, class Grd, class Gdr, class Dr, class Dd>
GeneratorLossTerms<T> unpaired_generator_terms(const Grd& g_rd, const Gdr& g_dr, const Dr& d_r, const Dd& d_d,
                                               const nn::Tensor<T>& x_r, const nn::Tensor<T>& y_d) {
  GeneratorLossTerms<T> t;
  const auto fake_d = g_rd(x_r);
  const auto fake_r = g_dr(y_d);
  const auto x_cycled = g_dr(fake_d);
  const auto y_cycled = g_rd(fake_r);
  t.gen_r2d = hinge_gen_loss(d_d(fake_d).scores);
  t.gen_d2r = hinge_gen_loss(d_r(fake_r).scores);
  t.cycle_r = multiscale_spec_loss(x_cycled, x_r);
  t.cycle_d = multiscale_spec_loss(y_cycled, y_d);
  std::tie(t.featcycle_r, t.featcycle_d) = feature_cycle_losses(d_r, d_d, x_r, x_cycled, y_d, y_cycled);
  t.id_d = identity_loss(g_rd, y_d);
  return t;
}

template <class T>
struct PairedLossTerms {
  nn::Tensor<T> hinge, feature, total;
};

/// Supervised objective: hinge on D_D(G(x_r)) plus weighted feature L1 against the target.
template <class T, class Grd, class Dd>
PairedLossTerms<T> paired_loss(const Grd& g_rd, const Dd& d_d, const nn::Tensor<T>& x_r,
                               const nn::Tensor<T>& target, double feature_weight = kPairedFeatureWeight) {
  if (x_r.shape() != target.shape()) throw InvalidArgument("paired_loss: input and target shapes differ");
  const auto fake = d_d(g_rd(x_r));
  const auto real = d_d(target);
  PairedLossTerms<T> t;
  t.hinge = hinge_gen_loss(fake.scores);
  t.feature = feature_loss(fake.features, real.features);
  t.total = nn::add(t.hinge, nn::scale(t.feature, static_cast<T>(feature_weight)));
  return t;
}

/// Named scalar losses of one training step, in insertion order.
struct LossReport {
  std::vector<std::pair<std::string, double>> values;

  void set(const std::string& name, double v) {
    for (auto& [n, x] : values)
      if (n == name) {
        x = v;
        return;
      }
    values.emplace_back(name, v);
  }
  double get(const std::string& name) const {
    for (const auto& [n, x] : values)
      if (n == name) return x;
    throw InvalidArgument("loss report has no entry " + name);
  }
  bool has(const std::string& name) const {
    for (const auto& [n, x] : values)
      if (n == name) return true;
    return false;
  }
  /// Name of the first non-finite entry, or empty.
  std::string first_non_finite() const {
    for (const auto& [n, x] : values)
      if (!std::isfinite(x)) return n;
    return {};
  }
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [n, x] : values) j[n] = x;
    return j;
  }
  bool operator==(const LossReport&) const = default;
};

}  // namespace dereverb
