// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "dereverb/nn/tensor.hpp"

namespace dereverb::nn {

struct Conv2dGeometry {
  std::size_t kh = 1, kw = 1;
  std::size_t sh = 1, sw = 1;
  std::size_t ph = 0, pw = 0;
  std::size_t groups = 1;
};

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

inline std::size_t conv_out(std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
  if (in + 2 * p < k) throw InvalidArgument("convolution input smaller than kernel");
  return (in + 2 * p - k) / s + 1;
}

/// col[(c*kh + i)*kw + j, oh*wo + ow] = x[c, oh*sh - ph + i, ow*sw - pw + j].
template <class T>
void im2col(const T* x, std::size_t c, std::size_t h, std::size_t w, const Conv2dGeometry& g,
            std::size_t ho, std::size_t wo, T* col) {
  const std::size_t p = ho * wo;
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = col + ((ci * g.kh + i) * g.kw + j) * p;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.sh + i) - static_cast<std::ptrdiff_t>(g.ph);
          T* r = row + oh * wo;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) {
            std::fill_n(r, wo, T(0));
            continue;
          }
          const T* xr = x + (ci * h + ih) * w;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.sw + j) - static_cast<std::ptrdiff_t>(g.pw);
            r[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) ? T(0) : xr[iw];
          }
        }
      }
}

/// Adjoint of im2col: accumulates col back into x.
template <class T>
void col2im(const T* col, std::size_t c, std::size_t h, std::size_t w, const Conv2dGeometry& g,
            std::size_t ho, std::size_t wo, T* x) {
  const std::size_t p = ho * wo;
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((ci * g.kh + i) * g.kw + j) * p;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.sh + i) - static_cast<std::ptrdiff_t>(g.ph);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          const T* r = row + oh * wo;
          T* xr = x + (ci * h + ih) * w;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.sw + j) - static_cast<std::ptrdiff_t>(g.pw);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(w)) xr[iw] += r[ow];
          }
        }
      }
}

}  // namespace detail

/// 2-D cross-correlation. x [N, C, H, W], weight [O, C/groups, kh, kw], bias [O] (optional).
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv2dGeometry g) {
  if (x.rank() != 4 || weight.rank() != 4) throw InvalidArgument("conv2d expects rank-4 input and weight");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t o = weight.dim(0), gr = g.groups;
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  if (gr == 0 || c % gr || o % gr || weight.dim(1) != c / gr)
    throw InvalidArgument("conv2d: channel/group mismatch, input " + shape_str(x.shape()) +
                          " weight " + shape_str(weight.shape()));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != o))
    throw InvalidArgument("conv2d: bias must have shape [O]");
  const std::size_t ho = detail::conv_out(h, g.kh, g.sh, g.ph), wo = detail::conv_out(w, g.kw, g.sw, g.pw);
  const std::size_t cg = c / gr, og = o / gr, k = cg * g.kh * g.kw, p = ho * wo;

  std::vector<T> out(n * o * p);
  std::vector<T> col(k * p);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t gi = 0; gi < gr; ++gi) {
      detail::im2col(x.data() + (b * c + gi * cg) * h * w, cg, h, w, g, ho, wo, col.data());
      detail::MapMat<T> y(out.data() + (b * o + gi * og) * p, og, p);
      y.noalias() = detail::CMapMat<T>(weight.data() + gi * og * k, og, k) *
                    detail::CMapMat<T>(col.data(), k, p);
      if (bias.defined())
        for (std::size_t oc = 0; oc < og; ++oc) y.row(oc).array() += bias.value()[gi * og + oc];
    }

  auto xn = x.node(), wn = weight.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  std::vector<std::shared_ptr<Node<T>>> parents{xn, wn};
  if (bn) parents.push_back(bn);
  return detail::make_result<T>(
      {n, o, ho, wo}, std::move(out), std::move(parents),
      [=](Node<T>& self) {
        std::vector<T> col(k * p), dcol(k * p);
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t gi = 0; gi < gr; ++gi) {
            detail::CMapMat<T> dy(self.grad.data() + (b * o + gi * og) * p, og, p);
            if (wn->requires_grad) {
              detail::im2col(xn->value.data() + (b * c + gi * cg) * h * w, cg, h, w, g, ho, wo, col.data());
              detail::MapMat<T>(wn->ensure_grad().data() + gi * og * k, og, k).noalias() +=
                  dy * detail::CMapMat<T>(col.data(), k, p).transpose();
            }
            if (xn->requires_grad) {
              detail::MapMat<T>(dcol.data(), k, p).noalias() =
                  detail::CMapMat<T>(wn->value.data() + gi * og * k, og, k).transpose() * dy;
              detail::col2im(dcol.data(), cg, h, w, g, ho, wo,
                             xn->ensure_grad().data() + (b * c + gi * cg) * h * w);
            }
            if (bn && bn->requires_grad) {
              auto& gb = bn->ensure_grad();
              // Sequential sum: vectorized reductions depend on buffer alignment.
              for (std::size_t oc = 0; oc < og; ++oc) {
                const T* r = self.grad.data() + (b * o + gi * og + oc) * p;
                T acc = T(0);
                for (std::size_t i = 0; i < p; ++i) acc += r[i];
                gb[gi * og + oc] += acc;
              }
            }
          }
      });
}

/// Transposed 2-D convolution (adjoint of conv2d in x). x [N, C, H, W],
/// weight [C, O, kh, kw], bias [O]. Output H' = (H - 1) sh - 2 ph + kh.
template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           Conv2dGeometry g) {
  if (x.rank() != 4 || weight.rank() != 4) throw InvalidArgument("conv_transpose2d expects rank-4 tensors");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (weight.dim(0) != c) throw InvalidArgument("conv_transpose2d: weight input channels mismatch");
  const std::size_t o = weight.dim(1);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.groups = 1;
  if ((h - 1) * g.sh + g.kh < 2 * g.ph + 1 || (w - 1) * g.sw + g.kw < 2 * g.pw + 1)
    throw InvalidArgument("conv_transpose2d: padding too large");
  const std::size_t ho = (h - 1) * g.sh + g.kh - 2 * g.ph, wo = (w - 1) * g.sw + g.kw - 2 * g.pw;
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != o))
    throw InvalidArgument("conv_transpose2d: bias must have shape [O]");
  const std::size_t k = o * g.kh * g.kw, p = h * w;

  std::vector<T> out(n * o * ho * wo, T(0));
  std::vector<T> col(k * p);
  for (std::size_t b = 0; b < n; ++b) {
    detail::MapMat<T>(col.data(), k, p).noalias() =
        detail::CMapMat<T>(weight.data(), c, k).transpose() * detail::CMapMat<T>(x.data() + b * c * p, c, p);
    // The forward conv that this op transposes maps [O, ho, wo] -> [C, h, w].
    detail::col2im(col.data(), o, ho, wo, g, h, w, out.data() + b * o * ho * wo);
    if (bias.defined())
      for (std::size_t oc = 0; oc < o; ++oc) {
        T* plane = out.data() + (b * o + oc) * ho * wo;
        for (std::size_t i = 0; i < ho * wo; ++i) plane[i] += bias.value()[oc];
      }
  }

  auto xn = x.node(), wn = weight.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  std::vector<std::shared_ptr<Node<T>>> parents{xn, wn};
  if (bn) parents.push_back(bn);
  return detail::make_result<T>(
      {n, o, ho, wo}, std::move(out), std::move(parents),
      [=](Node<T>& self) {
        std::vector<T> col(k * p);
        for (std::size_t b = 0; b < n; ++b) {
          const T* dy = self.grad.data() + b * o * ho * wo;
          detail::im2col(dy, o, ho, wo, g, h, w, col.data());
          detail::CMapMat<T> dcol(col.data(), k, p);
          if (xn->requires_grad)
            detail::MapMat<T>(xn->ensure_grad().data() + b * c * p, c, p).noalias() +=
                detail::CMapMat<T>(wn->value.data(), c, k) * dcol;
          if (wn->requires_grad)
            detail::MapMat<T>(wn->ensure_grad().data(), c, k).noalias() +=
                detail::CMapMat<T>(xn->value.data() + b * c * p, c, p) * dcol.transpose();
          if (bn && bn->requires_grad) {
            auto& gb = bn->ensure_grad();
            for (std::size_t oc = 0; oc < o; ++oc) {
              T s = 0;
              for (std::size_t i = 0; i < ho * wo; ++i) s += dy[oc * ho * wo + i];
              gb[oc] += s;
            }
          }
        }
      });
}

/// 1-D grouped convolution with zero padding. x [N, C, L], weight [O, C/groups, k].
template <class T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                 std::size_t padding, std::size_t groups = 1) {
  if (x.rank() != 3 || weight.rank() != 3) throw InvalidArgument("conv1d expects rank-3 input and weight");
  Conv2dGeometry g;
  g.sh = 1;
  g.sw = stride;
  g.pw = padding;
  g.groups = groups;
  auto x4 = reshape(x, {x.dim(0), x.dim(1), 1, x.dim(2)});
  auto w4 = reshape(weight, {weight.dim(0), weight.dim(1), 1, weight.dim(2)});
  auto y = conv2d(x4, w4, bias, g);
  return reshape(y, {y.dim(0), y.dim(1), y.dim(3)});
}

/// Average pooling over the last axis; padded positions are excluded from the count.
template <class T>
Tensor<T> avg_pool1d(const Tensor<T>& x, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (x.rank() != 3) throw InvalidArgument("avg_pool1d expects [N, C, L]");
  const std::size_t rows = x.dim(0) * x.dim(1), len = x.dim(2);
  const std::size_t out_len = detail::conv_out(len, kernel, stride, padding);
  std::vector<T> out(rows * out_len);
  std::vector<std::size_t> lo(out_len), hi(out_len);
  for (std::size_t t = 0; t < out_len; ++t) {
    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t * stride) - static_cast<std::ptrdiff_t>(padding);
    lo[t] = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, s));
    hi[t] = static_cast<std::size_t>(std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(len), s + static_cast<std::ptrdiff_t>(kernel)));
  }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < out_len; ++t) {
      T s = 0;
      for (std::size_t i = lo[t]; i < hi[t]; ++i) s += x.value()[r * len + i];
      out[r * out_len + t] = s / static_cast<T>(hi[t] - lo[t]);
    }
  auto xn = x.node();
  return detail::make_result<T>({x.dim(0), x.dim(1), out_len}, std::move(out), {xn},
                                [=](Node<T>& self) {
                                  auto& g = xn->ensure_grad();
                                  for (std::size_t r = 0; r < rows; ++r)
                                    for (std::size_t t = 0; t < out_len; ++t) {
                                      const T d = self.grad[r * out_len + t] / static_cast<T>(hi[t] - lo[t]);
                                      for (std::size_t i = lo[t]; i < hi[t]; ++i) g[r * len + i] += d;
                                    }
                                });
}

/// Weight normalization: w[o] = g[o] v[o] / ||v[o]||, one norm per leading index.
template <class T>
Tensor<T> weight_norm(const Tensor<T>& v, const Tensor<T>& gain) {
  const std::size_t o = v.dim(0), per = v.size() / o;
  if (gain.rank() != 1 || gain.dim(0) != o) throw InvalidArgument("weight_norm: gain must have shape [O]");
  std::vector<T> out(v.size()), norms(o);
  for (std::size_t i = 0; i < o; ++i) {
    T s = 0;
    for (std::size_t j = 0; j < per; ++j) s += v.value()[i * per + j] * v.value()[i * per + j];
    norms[i] = std::sqrt(s);
    if (!(norms[i] > T(0))) throw InvalidArgument("weight_norm: zero direction vector");
    for (std::size_t j = 0; j < per; ++j) out[i * per + j] = gain.value()[i] * v.value()[i * per + j] / norms[i];
  }
  auto vn = v.node(), gn = gain.node();
  return detail::make_result<T>(v.shape(), std::move(out), {vn, gn}, [=](Node<T>& self) {
    for (std::size_t i = 0; i < o; ++i) {
      const T* dw = self.grad.data() + i * per;
      const T* vv = vn->value.data() + i * per;
      T dot = 0;
      for (std::size_t j = 0; j < per; ++j) dot += dw[j] * vv[j];
      const T unit_dot = dot / norms[i];
      if (gn->requires_grad) gn->ensure_grad()[i] += unit_dot;
      if (vn->requires_grad) {
        T* dv = vn->ensure_grad().data() + i * per;
        const T gscale = gn->value[i] / norms[i];
        for (std::size_t j = 0; j < per; ++j) dv[j] += gscale * (dw[j] - unit_dot * vv[j] / norms[i]);
      }
    }
  });
}

}  // namespace dereverb::nn
