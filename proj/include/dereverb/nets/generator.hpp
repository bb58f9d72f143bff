// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "json.hpp"

#include "dereverb/dsp/stft.hpp"
#include "dereverb/dsp/waveform.hpp"
#include "dereverb/nn/params.hpp"
#include "dereverb/nn/spectral.hpp"

namespace dereverb {

/// Layer schedule of the STFT-domain UNet. Each encoder block is conv-A (3x3,
/// stride 1) then conv-B, which halves frequency (3x4 kernel, stride 1x2) or
/// both axes (4x4 kernel, stride 2x2). The decoder mirrors it with transposed
/// conv-B layers and concatenated skips.
struct GeneratorConfig {
  std::vector<std::size_t> channels = {32, 64, 128, 192, 256, 256};
  std::vector<bool> time_stride = {false, false, false, true, true, true};
  double output_init_gain = 1.0;  // 0 gives a zero-initialized output projection

  static GeneratorConfig full() { return {}; }
  /// Four-block model used for desk-scale runs.
  static GeneratorConfig toy(std::vector<std::size_t> channels = {16, 24, 32, 48}) {
    GeneratorConfig c;
    c.channels = std::move(channels);
    c.time_stride.assign(c.channels.size(), false);
    c.time_stride.back() = true;
    return c;
  }

  std::size_t blocks() const { return channels.size(); }
  std::size_t freq_multiple() const { return std::size_t{1} << blocks(); }
  std::size_t time_multiple() const {
    return std::size_t{1} << std::count(time_stride.begin(), time_stride.end(), true);
  }
  void validate() const {
    if (channels.empty() || channels.size() != time_stride.size())
      throw InvalidArgument("generator config: channels and time_stride must be non-empty and equal length");
    for (auto c : channels)
      if (c == 0) throw InvalidArgument("generator config: zero channel count");
  }
  nlohmann::json to_json() const {
    return {{"channels", channels}, {"time_stride", time_stride}, {"output_init_gain", output_init_gain}};
  }
  static GeneratorConfig from_json(const nlohmann::json& j) {
    GeneratorConfig c;
    c.channels = j.at("channels").get<std::vector<std::size_t>>();
    c.time_stride = j.at("time_stride").get<std::vector<bool>>();
    c.output_init_gain = j.value("output_init_gain", 1.0);
    c.validate();
    return c;
  }
};

template <class T>
class Generator {
 public:
  using Tensor = nn::Tensor<T>;

  Generator() = default;
  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;
  Generator(Generator&&) = default;
  Generator& operator=(Generator&&) = default;

  explicit Generator(GeneratorConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto& ch = cfg_.channels;
    add_conv("stem", ch[0], 2, 3, 3);
    for (std::size_t i = 0; i < cfg_.blocks(); ++i) {
      const std::size_t in = i == 0 ? ch[0] : ch[i - 1];
      const std::string p = "enc" + std::to_string(i + 1);
      add_conv(p + ".conv_a", ch[i], in, 3, 3);
      add_conv(p + ".conv_b", ch[i], ch[i], cfg_.time_stride[i] ? 4 : 3, 4);
    }
    add_conv("bottleneck", ch.back(), ch.back(), 3, 3);
    for (std::size_t i = cfg_.blocks(); i-- > 0;) {
      const std::size_t out = i == 0 ? ch[0] : ch[i - 1];
      const std::string p = "dec" + std::to_string(i + 1);
      add_conv(p + ".conv_a", ch[i], 2 * ch[i], 3, 3);
      add_deconv(p + ".conv_b", ch[i], out, cfg_.time_stride[i] ? 4 : 3, 4);
    }
    add_conv("head", 2, ch[0], 3, 3);
  }

  const GeneratorConfig& config() const { return cfg_; }

  /// Deep copy (parameters are not shared).
  Generator clone() const {
    Generator g(cfg_);
    for (std::size_t i = 0; i < params_.size(); ++i) g.params_[i].value() = params_.items()[i].tensor.value();
    return g;
  }
  nn::ParamList<T>& params() { return params_; }
  const nn::ParamList<T>& params() const { return params_; }

  /// Fan-in scaled normal weights, zero biases; deterministic per seed.
  void init_params(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x6e6e));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& t = params_[i];
      if (t.rank() == 1) {
        std::fill(t.value().begin(), t.value().end(), T(0));
        continue;
      }
      const bool head = params_.items()[i].name == "head.weight";
      init_fan_in(t, fan_in_[i], rng, head ? cfg_.output_init_gain : 1.0);
    }
  }

  /// Spectrogram-to-spectrogram UNet on [N, 2, T, F] with T and F multiples of
  /// the cumulative strides.
  Tensor unet(const Tensor& x) const {
    std::size_t k = 0;
    auto next = [&]() -> const Tensor& { return params_.items()[k++].tensor; };
    auto conv = [&](const Tensor& in, nn::Conv2dGeometry g) {
      const Tensor& w = next();
      const Tensor& b = next();
      return nn::conv2d(in, w, b, g);
    };
    const nn::Conv2dGeometry same{.kh = 3, .kw = 3, .sh = 1, .sw = 1, .ph = 1, .pw = 1};
    auto h = nn::elu(conv(x, same));
    std::vector<Tensor> skips;
    for (std::size_t i = 0; i < cfg_.blocks(); ++i) {
      h = nn::elu(conv(h, same));
      h = nn::elu(conv(h, down_geometry(i)));
      skips.push_back(h);
    }
    h = nn::elu(conv(h, same));
    for (std::size_t i = cfg_.blocks(); i-- > 0;) {
      h = nn::elu(conv(nn::concat_channels(h, skips[i]), same));
      const Tensor& w = next();
      const Tensor& b = next();
      h = nn::elu(nn::conv_transpose2d(h, w, b, down_geometry(i)));
    }
    return conv(h, same);
  }

  /// Waveform batch [N, L] -> [N, L]. The signal is padded by one hop in front
  /// and to a whole number of hops (at least one) at the back so every sample
  /// is covered by two frames; the spectrogram is zero-padded to the stride
  /// multiples and cropped back after the UNet.
  Tensor forward(const Tensor& wave) const {
    if (wave.rank() != 2) throw InvalidArgument("generator expects [N, L]");
    const std::size_t len = wave.dim(1);
    if (len < kStftWindow) throw InvalidArgument("input too short");
    const std::size_t padded = ((len + 2 * kStftHop + kStftHop - 1) / kStftHop) * kStftHop;
    auto xp = nn::window1d(wave, -static_cast<std::ptrdiff_t>(kStftHop), padded);
    auto spec = nn::stft(xp);
    const std::size_t frames = spec.dim(2), bins = spec.dim(3);
    const std::size_t tp = round_up(frames, cfg_.time_multiple()), fp = round_up(bins, cfg_.freq_multiple());
    auto y = unet(nn::window2d(spec, 0, 0, tp, fp));
    auto out = nn::istft(nn::window2d(y, 0, 0, frames, bins));
    return nn::window1d(out, static_cast<std::ptrdiff_t>(kStftHop), len);
  }

  Tensor operator()(const Tensor& wave) const { return forward(wave); }

  /// Inference on one waveform of any length >= 320 samples, in overlapping
  /// chunks blended by normalized linear cross-fades. Chunk starts are aligned
  /// to the frame grid of the strided layers so interiors match a single pass.
  /// Output length = input length.
  Waveform enhance(const Waveform& w, std::size_t chunk = 4 * kSampleRate,
                   std::size_t overlap = kSampleRate / 4) const {
    if (w.size() < kStftWindow) throw InvalidArgument("input too short");
    const std::size_t align = kStftHop * cfg_.time_multiple();
    if (overlap * 2 > chunk || chunk < overlap + align) throw InvalidArgument("overlap too large for chunk");
    nn::NoGradGuard guard;
    auto run = [&](std::size_t begin, std::size_t count) {
      std::vector<T> v(count);
      for (std::size_t i = 0; i < count; ++i) v[i] = static_cast<T>(w[begin + i]);
      return forward(Tensor::from({1, count}, std::move(v))).value();
    };
    Waveform out = Waveform::zeros(w.size());
    std::vector<std::size_t> starts{0};
    const std::size_t step = (chunk - overlap) / align * align;
    while (starts.back() + chunk < w.size()) starts.push_back(starts.back() + step);
    std::vector<std::size_t> ends(starts.size());
    for (std::size_t c = 0; c < starts.size(); ++c)
      ends[c] = c + 1 < starts.size() ? starts[c] + chunk : w.size();
    std::vector<double> weight_sum(w.size(), 0.0);
    for (std::size_t c = 0; c < starts.size(); ++c) {
      const std::size_t b = starts[c], e = ends[c];
      const auto y = run(b, e - b);
      for (std::size_t i = b; i < e; ++i) {
        double a = 1.0;
        if (c > 0 && i < ends[c - 1]) a = (i - b + 0.5) / (ends[c - 1] - b);
        if (c + 1 < starts.size() && i >= starts[c + 1])
          a = std::min(a, (e - i - 0.5) / (e - starts[c + 1]));
        out[i] += a * y[i - b];
        weight_sum[i] += a;
      }
    }
    for (std::size_t i = 0; i < w.size(); ++i) out[i] /= weight_sum[i];
    return out;
  }

 private:
  static std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

  nn::Conv2dGeometry down_geometry(std::size_t block) const {
    nn::Conv2dGeometry g;
    g.sh = cfg_.time_stride[block] ? 2 : 1;
    g.sw = 2;
    g.ph = 1;
    g.pw = 1;
    return g;
  }

  void add_conv(const std::string& name, std::size_t out, std::size_t in, std::size_t kh, std::size_t kw) {
    params_.add(name + ".weight", {out, in, kh, kw});
    fan_in_.push_back(in * kh * kw);
    params_.add(name + ".bias", {out});
    fan_in_.push_back(0);
  }
  void add_deconv(const std::string& name, std::size_t in, std::size_t out, std::size_t kh, std::size_t kw) {
    params_.add(name + ".weight", {in, out, kh, kw});
    // Each output sees in * kh * kw / (stride area) inputs; stride area is 2 or 4.
    fan_in_.push_back(std::max<std::size_t>(1, in * kh * kw / (kh == 4 ? 4 : 2)));
    params_.add(name + ".bias", {out});
    fan_in_.push_back(0);
  }

  GeneratorConfig cfg_;
  nn::ParamList<T> params_;
  std::vector<std::size_t> fan_in_;
};

}  // namespace dereverb
