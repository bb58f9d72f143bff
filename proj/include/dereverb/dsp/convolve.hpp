// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "dereverb/dsp/fft.hpp"
#include "dereverb/dsp/waveform.hpp"

namespace dereverb {

namespace detail {

// Linear convolution of two sequences; direct sum for short kernels, FFT otherwise.
inline std::vector<double> convolve_raw(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t out_len = a.size() + b.size() - 1;
  std::vector<double> out(out_len, 0.0);
  if (std::min(a.size(), b.size()) <= 64) {
    const auto& longer = a.size() >= b.size() ? a : b;
    const auto& shorter = a.size() >= b.size() ? b : a;
    for (std::size_t j = 0; j < shorter.size(); ++j) {
      const double s = shorter[j];
      if (s == 0.0) continue;
      double* o = out.data() + j;
      for (std::size_t i = 0; i < longer.size(); ++i) o[i] += s * longer[i];
    }
    return out;
  }
  const std::size_t n = next_pow2(out_len);
  const auto& plan = fft_plan<double>(n);
  // Pack a + i b, transform once, and split the spectra by Hermitian symmetry.
  std::vector<std::complex<double>> z(n);
  for (std::size_t i = 0; i < a.size(); ++i) z[i].real(a[i]);
  for (std::size_t i = 0; i < b.size(); ++i) z[i].imag(b[i]);
  plan.forward(z);
  std::vector<std::complex<double>> prod(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::complex<double> zk = z[k];
    const std::complex<double> zc = std::conj(z[(n - k) % n]);
    const std::complex<double> fa = 0.5 * (zk + zc);
    const std::complex<double> fb = std::complex<double>(0.0, -0.5) * (zk - zc);
    prod[k] = fa * fb;
  }
  plan.inverse_unscaled(prod);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = prod[i].real() * inv;
  return out;
}

}  // namespace detail

/// Full linear convolution; output length is len(w) + len(h) - 1.
inline Waveform convolve_full(const Waveform& w, const Waveform& h) {
  if (w.empty() || h.empty()) throw InvalidArgument("convolution operands must be non-empty");
  if (w.sample_rate_hz != h.sample_rate_hz)
    throw InvalidArgument("sample-rate mismatch in convolution");
  return Waveform(detail::convolve_raw(w.samples, h.samples), w.sample_rate_hz);
}

/// Samples [begin, begin + count) of convolve_full(w, h), computed from the
/// input span that influences them only. Positions past the full output are zero.
inline Waveform convolve_range(const Waveform& w, const Waveform& h, std::size_t begin,
                               std::size_t count) {
  if (w.empty() || h.empty()) throw InvalidArgument("convolution operands must be non-empty");
  if (w.sample_rate_hz != h.sample_rate_hz)
    throw InvalidArgument("sample-rate mismatch in convolution");
  Waveform out = Waveform::zeros(count, w.sample_rate_hz);
  const std::size_t full_len = w.size() + h.size() - 1;
  if (begin >= full_len || count == 0) return out;
  // y[m] depends on w[m - h.size() + 1 .. m].
  const std::size_t in_lo = begin + 1 >= h.size() ? begin + 1 - h.size() : 0;
  const std::size_t in_hi = std::min(w.size(), begin + count);
  if (in_lo >= in_hi) return out;
  std::span<const double> seg(w.samples.data() + in_lo, in_hi - in_lo);
  const auto part = detail::convolve_raw(seg, h.samples);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t m = begin + i;
    if (m >= full_len) break;
    const std::size_t local = m - in_lo;
    if (local < part.size()) out.samples[i] = part[local];
  }
  return out;
}

}  // namespace dereverb
