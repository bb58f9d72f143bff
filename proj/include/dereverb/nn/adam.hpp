// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "dereverb/nn/params.hpp"

namespace dereverb::nn {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables
};

/// Adam without weight decay. Moments are kept in double regardless of T so
/// float training stays reproducible across resumes.
template <class T>
class Adam {
 public:
  Adam() = default;
  Adam(ParamList<T>& params, AdamOptions o) : params_(&params), opt_(o) {
    for (const auto& p : params.items()) {
      m_.emplace_back(p.tensor.size(), 0.0);
      v_.emplace_back(p.tensor.size(), 0.0);
    }
  }

  /// Applies accumulated gradients and clears them. Parameters without a
  /// gradient this step are left untouched (their moments do not decay).
  void step() {
    ++t_;
    double scale = 1.0;
    if (opt_.clip_norm > 0) {
      double sq = 0;
      for (auto& p : params_->items())
        for (T g : p.tensor.grad()) sq += static_cast<double>(g) * g;
      const double norm = std::sqrt(sq);
      if (norm > opt_.clip_norm) scale = opt_.clip_norm / norm;
    }
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    auto& items = params_->items();
    for (std::size_t i = 0; i < items.size(); ++i) {
      auto& p = items[i].tensor;
      if (p.grad().empty()) continue;
      auto& val = p.value();
      const auto& g = p.grad();
      for (std::size_t j = 0; j < val.size(); ++j) {
        const double gj = scale * static_cast<double>(g[j]);
        m_[i][j] = opt_.beta1 * m_[i][j] + (1.0 - opt_.beta1) * gj;
        v_[i][j] = opt_.beta2 * v_[i][j] + (1.0 - opt_.beta2) * gj * gj;
        const double upd = opt_.lr * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + opt_.eps);
        val[j] = static_cast<T>(static_cast<double>(val[j]) - upd);
      }
      p.zero_grad();
    }
  }

  long long step_count() const { return t_; }
  const AdamOptions& options() const { return opt_; }
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void set_step_count(long long t) { t_ = t; }

 private:
  ParamList<T>* params_ = nullptr;
  AdamOptions opt_;
  std::vector<std::vector<double>> m_, v_;
  long long t_ = 0;
};

}  // namespace dereverb::nn
