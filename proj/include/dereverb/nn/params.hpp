// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dereverb/nn/tensor.hpp"
#include "dereverb/random.hpp"

namespace dereverb::nn {

template <class T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

/// Ordered set of trainable leaf tensors. Order is the serialization order.
template <class T>
class ParamList {
 public:
  Tensor<T>& add(std::string name, Shape shape) {
    items_.push_back({std::move(name), Tensor<T>::zeros(std::move(shape), true)});
    return items_.back().tensor;
  }

  std::vector<NamedParam<T>>& items() { return items_; }
  const std::vector<NamedParam<T>>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  Tensor<T>& operator[](std::size_t i) { return items_[i].tensor; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.tensor.size();
    return n;
  }
  void set_requires_grad(bool r) {
    for (auto& p : items_) p.tensor.set_requires_grad(r);
  }
  void zero_grad() {
    for (auto& p : items_) p.tensor.zero_grad();
  }

 private:
  std::vector<NamedParam<T>> items_;
};

/// Fills with N(0, gain^2 / fan_in).
template <class T>
void init_fan_in(Tensor<T>& t, std::size_t fan_in, Rng& rng, double gain = 1.0) {
  const double sd = gain / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.value()) v = static_cast<T>(sd * standard_normal(rng));
}

}  // namespace dereverb::nn
