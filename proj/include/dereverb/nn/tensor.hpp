// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "dereverb/error.hpp"

/// Minimal reverse-mode automatic differentiation over dense row-major tensors.
/// Graphs are recorded implicitly through parent links and released after
/// backward().
namespace dereverb::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

namespace detail {
inline thread_local bool grad_enabled = true;
}

/// Disables graph recording in its scope.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

template <class T>
class Tensor {
 public:
  using NodePtr = std::shared_ptr<Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr n) : n_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value.assign(numel(shape), T(0));
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (values.size() != numel(shape))
      throw InvalidArgument("tensor: " + std::to_string(values.size()) + " values for shape " +
                            shape_str(shape));
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(values);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }
  static Tensor scalar(T v) { return from({}, {v}); }

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  std::size_t dim(std::size_t i) const { return n_->shape.at(i); }
  std::size_t rank() const { return n_->shape.size(); }
  std::size_t size() const { return n_->value.size(); }
  std::vector<T>& value() { return n_->value; }
  const std::vector<T>& value() const { return n_->value; }
  T* data() { return n_->value.data(); }
  const T* data() const { return n_->value.data(); }
  T item() const {
    if (size() != 1) throw InvalidArgument("item() on tensor of shape " + shape_str(shape()));
    return n_->value[0];
  }
  const std::vector<T>& grad() const { return n_->grad; }
  std::vector<T>& grad() { return n_->grad; }
  void zero_grad() { n_->grad.clear(); }
  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool r) { n_->requires_grad = r; }
  const NodePtr& node() const { return n_; }

  /// Same values, cut from the graph.
  Tensor detach() const { return from(shape(), value(), false); }

  /// Accumulates d(this)/d(leaf) into every reachable leaf that requires grad.
  /// `seed` defaults to ones (a scalar loss has seed 1).
  void backward(const std::vector<T>* seed = nullptr) {
    if (!n_->requires_grad) throw InvalidArgument("backward() on a tensor that does not require grad");
    // Shared ownership keeps every node alive until the sweep ends, since
    // releasing a node's closure may drop the last reference to a parent.
    std::vector<std::shared_ptr<Node<T>>> order;
    {
      std::unordered_set<Node<T>*> seen;
      std::vector<std::pair<std::shared_ptr<Node<T>>, std::size_t>> stack{{n_, 0}};
      seen.insert(n_.get());
      while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
          auto p = node->parents[next++];
          if (p->requires_grad && seen.insert(p.get()).second) stack.push_back({std::move(p), 0});
        } else {
          order.push_back(node);
          stack.pop_back();
        }
      }
    }
    auto& g = n_->ensure_grad();
    if (seed) {
      if (seed->size() != g.size()) throw InvalidArgument("backward seed has wrong size");
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*seed)[i];
    } else {
      for (auto& v : g) v += T(1);
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* node = it->get();
      if (node->backward) {
        if (!node->grad.empty()) node->backward(*node);
        node->backward = nullptr;
        node->parents.clear();
        node->grad.clear();
        node->grad.shrink_to_fit();
      }
    }
  }

 private:
  NodePtr n_;
};

namespace detail {

/// Creates an op output; records parents and the backward closure only when
/// some input requires grad and recording is enabled.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::vector<std::shared_ptr<Node<T>>> parents,
                      std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool needs = false;
  if (grad_enabled)
    for (const auto& p : parents) needs = needs || p->requires_grad;
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return Tensor<T>(n);
}

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw InvalidArgument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
}

template <class T, class F, class D>
Tensor<T> unary(const Tensor<T>& x, F f, D df) {
  std::vector<T> out(x.size());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  auto xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {xn}, [xn, df](Node<T>& self) {
    auto& g = xn->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(xn->value[i], self.value[i]);
  });
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_result<T>(a.shape(), std::move(out), {an, bn}, [an, bn](Node<T>& self) {
    for (auto* p : {an.get(), bn.get()}) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_result<T>(a.shape(), std::move(out), {an, bn}, [an, bn](Node<T>& self) {
    if (an->requires_grad) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_result<T>(a.shape(), std::move(out), {an, bn}, [an, bn](Node<T>& self) {
    if (an->requires_grad) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->value[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return detail::unary(x, [s](T v) { return s * v; }, [s](T, T) { return s; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return detail::unary(x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return v < T(0) ? T(0) : v; }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2)) {
  return detail::unary(
      x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <class T>
Tensor<T> elu(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return v > T(0) ? v : std::expm1(v); },
      [](T v, T y) { return v > T(0) ? T(1) : y + T(1); });
}

template <class T>
Tensor<T> abs(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <class T>
Tensor<T> log(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  // Accumulate in double so float sums do not depend on magnitude ordering as much.
  double s = 0;
  for (T v : x.value()) s += v;
  auto xn = x.node();
  return detail::make_result<T>({}, {static_cast<T>(s)}, {xn}, [xn](Node<T>& self) {
    auto& g = xn->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.size() == 0) throw InvalidArgument("mean of empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

/// Same values under a new shape of equal element count.
template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size())
    throw InvalidArgument("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  auto xn = x.node();
  return detail::make_result<T>(std::move(shape), x.value(), {xn}, [xn](Node<T>& self) {
    auto& g = xn->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

/// Concatenates along axis 1 (channels); all other axes must match.
template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || a.rank() != b.rank() || a.dim(0) != b.dim(0))
    throw InvalidArgument("concat_channels: incompatible shapes");
  for (std::size_t i = 2; i < a.rank(); ++i)
    if (a.dim(i) != b.dim(i))
      throw InvalidArgument("concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t n = a.dim(0);
  const std::size_t sa = a.size() / n, sb = b.size() / n;
  Shape shape = a.shape();
  shape[1] += b.dim(1);
  std::vector<T> out(a.size() + b.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data() + i * sa, sa, out.data() + i * (sa + sb));
    std::copy_n(b.data() + i * sb, sb, out.data() + i * (sa + sb) + sa);
  }
  auto an = a.node(), bn = b.node();
  return detail::make_result<T>(std::move(shape), std::move(out), {an, bn},
                                [an, bn, n, sa, sb](Node<T>& self) {
                                  for (std::size_t i = 0; i < n; ++i) {
                                    const T* g = self.grad.data() + i * (sa + sb);
                                    if (an->requires_grad) {
                                      T* ga = an->ensure_grad().data() + i * sa;
                                      for (std::size_t j = 0; j < sa; ++j) ga[j] += g[j];
                                    }
                                    if (bn->requires_grad) {
                                      T* gb = bn->ensure_grad().data() + i * sb;
                                      for (std::size_t j = 0; j < sb; ++j) gb[j] += g[sa + j];
                                    }
                                  }
                                });
}

/// Window of the last two axes of a rank-4 tensor: output[..., h, w] =
/// input[..., h + h0, w + w0], zero outside the input. Negative offsets pad.
template <class T>
Tensor<T> window2d(const Tensor<T>& x, std::ptrdiff_t h0, std::ptrdiff_t w0, std::size_t out_h,
                   std::size_t out_w) {
  if (x.rank() != 4) throw InvalidArgument("window2d expects a rank-4 tensor");
  const std::size_t planes = x.dim(0) * x.dim(1), in_h = x.dim(2), in_w = x.dim(3);
  std::vector<T> out(planes * out_h * out_w, T(0));
  auto for_each = [=](auto&& f) {
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t h = 0; h < out_h; ++h) {
        const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(h) + h0;
        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(in_h)) continue;
        for (std::size_t w = 0; w < out_w; ++w) {
          const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(w) + w0;
          if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(in_w)) continue;
          f((p * out_h + h) * out_w + w, (p * in_h + ih) * in_w + iw);
        }
      }
  };
  for_each([&](std::size_t o, std::size_t i) { out[o] = x.value()[i]; });
  auto xn = x.node();
  return detail::make_result<T>({x.dim(0), x.dim(1), out_h, out_w}, std::move(out), {xn},
                                [xn, for_each](Node<T>& self) {
                                  auto& g = xn->ensure_grad();
                                  for_each([&](std::size_t o, std::size_t i) { g[i] += self.grad[o]; });
                                });
}

/// Window of the last axis: output[..., t] = input[..., t + t0], zero outside.
template <class T>
Tensor<T> window1d(const Tensor<T>& x, std::ptrdiff_t t0, std::size_t out_len) {
  if (x.rank() < 1) throw InvalidArgument("window1d on a scalar");
  const std::size_t in_len = x.shape().back();
  const std::size_t rows = x.size() / std::max<std::size_t>(in_len, 1);
  Shape shape = x.shape();
  shape.back() = out_len;
  std::vector<T> out(rows * out_len, T(0));
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -t0);
  const std::ptrdiff_t hi =
      std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(out_len), static_cast<std::ptrdiff_t>(in_len) - t0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::ptrdiff_t t = lo; t < hi; ++t) out[r * out_len + t] = x.value()[r * in_len + t + t0];
  auto xn = x.node();
  return detail::make_result<T>(std::move(shape), std::move(out), {xn},
                                [xn, rows, in_len, out_len, t0, lo, hi](Node<T>& self) {
                                  auto& g = xn->ensure_grad();
                                  for (std::size_t r = 0; r < rows; ++r)
                                    for (std::ptrdiff_t t = lo; t < hi; ++t)
                                      g[r * in_len + t + t0] += self.grad[r * out_len + t];
                                });
}

/// Splits the leading axis: returns rows [begin, begin + count).
template <class T>
Tensor<T> slice_batch(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  if (x.rank() < 1 || begin + count > x.dim(0)) throw InvalidArgument("slice_batch out of range");
  const std::size_t stride = x.size() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = count;
  std::vector<T> out(x.value().begin() + begin * stride, x.value().begin() + (begin + count) * stride);
  auto xn = x.node();
  return detail::make_result<T>(std::move(shape), std::move(out), {xn},
                                [xn, begin, stride](Node<T>& self) {
                                  auto& g = xn->ensure_grad();
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                    g[begin * stride + i] += self.grad[i];
                                });
}

template <class T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

}  // namespace dereverb::nn
