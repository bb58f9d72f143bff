// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "dereverb/error.hpp"
#include "dereverb/random.hpp"

namespace dereverb {

struct ConfidenceInterval {
  double mean = 0;
  double half_width = 0;
};

/// Percentile bootstrap of the mean. half_width is half the distance between
/// the (1-c)/2 and (1+c)/2 quantiles of the resampled means.
inline ConfidenceInterval bootstrap_ci(std::span<const double> values, double confidence = 0.95,
                                       std::size_t n_resamples = 10000, std::uint64_t seed = 0) {
  if (values.size() < 2) throw InvalidArgument("bootstrap_ci: need at least 2 values");
  if (!(confidence > 0 && confidence < 1)) throw InvalidArgument("bootstrap_ci: confidence in (0,1)");
  if (n_resamples < 2) throw InvalidArgument("bootstrap_ci: need at least 2 resamples");
  const std::size_t n = values.size();
  double mean = 0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);

  Rng rng(mix_seed(seed));
  std::vector<double> means(n_resamples);
  for (auto& m : means) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += values[uniform_index(rng, n)];
    m = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(n_resamples - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, n_resamples - 1);
    return means[lo] + (pos - lo) * (means[hi] - means[lo]);
  };
  const double alpha = 1.0 - confidence;
  return {mean, std::max(0.0, 0.5 * (quantile(1.0 - alpha / 2) - quantile(alpha / 2)))};
}

}  // namespace dereverb
