// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include "dereverb/dsp/fft.hpp"
#include "dereverb/dsp/stft.hpp"
#include "dereverb/nn/conv.hpp"

namespace dereverb::nn {

namespace detail {

/// Unwindowed inverse real-DFT basis, [bins x n]: x[i] = sum_k re_k icos[k,i] + im_k isin[k,i].
template <class T>
struct InverseDftBasis {
  std::vector<T> icos, isin;
  explicit InverseDftBasis(std::size_t n) {
    const std::size_t bins = n / 2 + 1;
    icos.resize(bins * n);
    isin.resize(bins * n);
    for (std::size_t k = 0; k < bins; ++k)
      for (std::size_t i = 0; i < n; ++i) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>((k * i) % n) / n;
        const double s = (k == 0 || 2 * k == n) ? 1.0 / n : 2.0 / n;
        icos[k * n + i] = static_cast<T>(s * std::cos(a));
        isin[k * n + i] = static_cast<T>(-s * std::sin(a));
      }
  }
};

template <class T>
const InverseDftBasis<T>& inverse_dft_basis(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<InverseDftBasis<T>>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<InverseDftBasis<T>>(n);
  return *slot;
}

}  // namespace detail

/// Differentiable Hann STFT of a batch of signals. x [N, L] -> [N, 2, T, bins]
/// with channel 0 the real part and channel 1 the imaginary part.
template <class T>
Tensor<T> stft(const Tensor<T>& x, std::size_t window = kStftWindow, std::size_t hop = kStftHop) {
  if (x.rank() != 2) throw InvalidArgument("nn::stft expects [N, L]");
  const std::size_t n = x.dim(0), len = x.dim(1);
  if (len < window) throw InvalidArgument("input too short");
  const auto& basis = dft_basis<T>(window);
  const std::size_t bins = basis.bins, frames = stft_frame_count(len, window, hop);
  using M = detail::RowMat<T>;
  detail::CMapMat<T> cosm(basis.cos_.data(), window, bins), sinm(basis.sin_.data(), window, bins);

  std::vector<T> out(n * 2 * frames * bins);
  M fr(frames, window);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t t = 0; t < frames; ++t)
      std::copy_n(x.data() + b * len + t * hop, window, fr.data() + t * window);
    detail::MapMat<T>(out.data() + (b * 2) * frames * bins, frames, bins).noalias() = fr * cosm;
    detail::MapMat<T>(out.data() + (b * 2 + 1) * frames * bins, frames, bins).noalias() = fr * sinm;
  }
  auto xn = x.node();
  return detail::make_result<T>({n, 2, frames, bins}, std::move(out), {xn}, [=, &basis](Node<T>& self) {
    detail::CMapMat<T> cosm(basis.cos_.data(), window, bins), sinm(basis.sin_.data(), window, bins);
    M dfr(frames, window);
    auto& g = xn->ensure_grad();
    for (std::size_t b = 0; b < n; ++b) {
      dfr.noalias() = detail::CMapMat<T>(self.grad.data() + (b * 2) * frames * bins, frames, bins) * cosm.transpose();
      dfr.noalias() += detail::CMapMat<T>(self.grad.data() + (b * 2 + 1) * frames * bins, frames, bins) * sinm.transpose();
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t i = 0; i < window; ++i) g[b * len + t * hop + i] += dfr(t, i);
    }
  });
}

/// Overlap-add inverse of nn::stft (no synthesis window). s [N, 2, T, bins] -> [N, (T-1) hop + window].
template <class T>
Tensor<T> istft(const Tensor<T>& s, std::size_t hop = kStftHop) {
  if (s.rank() != 4 || s.dim(1) != 2) throw InvalidArgument("nn::istft expects [N, 2, T, bins]");
  const std::size_t n = s.dim(0), frames = s.dim(2), bins = s.dim(3), window = 2 * (bins - 1);
  if (frames == 0) throw InvalidArgument("nn::istft: no frames");
  const std::size_t len = (frames - 1) * hop + window;
  const auto& basis = detail::inverse_dft_basis<T>(window);
  using M = detail::RowMat<T>;
  detail::CMapMat<T> icos(basis.icos.data(), bins, window), isin(basis.isin.data(), bins, window);

  std::vector<T> out(n * len, T(0));
  M fr(frames, window);
  for (std::size_t b = 0; b < n; ++b) {
    fr.noalias() = detail::CMapMat<T>(s.data() + (b * 2) * frames * bins, frames, bins) * icos;
    fr.noalias() += detail::CMapMat<T>(s.data() + (b * 2 + 1) * frames * bins, frames, bins) * isin;
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t i = 0; i < window; ++i) out[b * len + t * hop + i] += fr(t, i);
  }
  auto sn = s.node();
  return detail::make_result<T>({n, len}, std::move(out), {sn}, [=, &basis](Node<T>& self) {
    detail::CMapMat<T> icos(basis.icos.data(), bins, window), isin(basis.isin.data(), bins, window);
    M dfr(frames, window);
    auto& g = sn->ensure_grad();
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t t = 0; t < frames; ++t)
        std::copy_n(self.grad.data() + b * len + t * hop, window, dfr.data() + t * window);
      detail::MapMat<T>(g.data() + (b * 2) * frames * bins, frames, bins).noalias() += dfr * icos.transpose();
      detail::MapMat<T>(g.data() + (b * 2 + 1) * frames * bins, frames, bins).noalias() += dfr * isin.transpose();
    }
  });
}

/// Hann-windowed magnitude spectrogram via FFT. x [N, L] -> [N, T, n_fft/2 + 1].
/// The derivative of |X| at X = 0 is taken as 0.
template <class T>
Tensor<T> magnitude_stft(const Tensor<T>& x, std::size_t n_fft, std::size_t hop) {
  if (x.rank() != 2) throw InvalidArgument("magnitude_stft expects [N, L]");
  const std::size_t n = x.dim(0), len = x.dim(1);
  if (len < n_fft) throw InvalidArgument("magnitude_stft: input shorter than FFT size");
  const std::size_t frames = stft_frame_count(len, n_fft, hop), bins = n_fft / 2 + 1;
  const auto& plan = fft_plan<T>(n_fft);
  const auto win = periodic_hann<T>(n_fft);

  std::vector<T> out(n * frames * bins);
  // Keep the complex spectrum for the backward pass only when it will be used.
  const bool keep = detail::grad_enabled && x.requires_grad();
  auto spec = std::make_shared<std::vector<std::complex<T>>>(keep ? n * frames * bins : 0);
  std::vector<std::complex<T>> buf(n_fft);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t t = 0; t < frames; ++t) {
      const T* src = x.data() + b * len + t * hop;
      for (std::size_t i = 0; i < n_fft; ++i) buf[i] = {src[i] * win[i], T(0)};
      plan.forward(buf);
      const std::size_t base = (b * frames + t) * bins;
      for (std::size_t k = 0; k < bins; ++k) {
        out[base + k] = std::abs(buf[k]);
        if (keep) (*spec)[base + k] = buf[k];
      }
    }
  auto xn = x.node();
  return detail::make_result<T>({n, frames, bins}, std::move(out), {xn}, [=, &plan](Node<T>& self) {
    std::vector<std::complex<T>> buf(n_fft);
    auto& g = xn->ensure_grad();
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t t = 0; t < frames; ++t) {
        const std::size_t base = (b * frames + t) * bins;
        std::fill(buf.begin(), buf.end(), std::complex<T>(0));
        for (std::size_t k = 0; k < bins; ++k) {
          const T m = self.value[base + k];
          if (m > T(0)) buf[k] = self.grad[base + k] * (*spec)[base + k] / m;
        }
        // dL/dx[i] = w[i] Re(sum_k G_k e^{+2 pi i k i / N}) over the half spectrum.
        plan.inverse_unscaled(buf);
        T* dst = g.data() + b * len + t * hop;
        for (std::size_t i = 0; i < n_fft; ++i) dst[i] += win[i] * buf[i].real();
      }
  });
}

}  // namespace dereverb::nn
