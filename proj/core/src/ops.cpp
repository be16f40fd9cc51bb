// Copyright 2026 The claip-emo Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "claip/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <type_traits>
#include <vector>

#include <Eigen/Core>
#include <fmt/format.h>

#include "claip/error.hpp"

namespace claip::ops {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;
template <typename T>
using StridedR = Eigen::Map<MatR<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CStridedR = Eigen::Map<const MatR<T>, 0, Eigen::OuterStride<>>;

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw AxisError(fmt::format("{}: axis {} out of range for shape {}", op, axis, shape_str(shape)));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", op, shape_str(a.shape()), shape_str(b.shape())));
  }
}

template <typename T>
void require_same_tape(const Var<T>& a, const Var<T>& b) {
  if (&a.tape() != &b.tape()) throw StateError("operands recorded on different tapes");
}

// Elementwise unary op with derivative expressed via input x and output y.
template <typename T, typename F, typename D>
Var<T> unary(const Var<T>& x, F f, D dfdx) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi, dfdx](Tape<T>& t, std::size_t self) {
    T* gx = t.accum(xi);
    if (!gx) return;
    const auto g = t.grad_of(self);
    const Tensor<T>& xv = t.value(xi);
    const Tensor<T>& yv = t.value(self);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xv[i], yv[i]);
  });
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_same_tape(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError(fmt::format("matmul: cannot multiply {} by {}", shape_str(av.shape()), shape_str(bv.shape())));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out(Shape{m, n});
  MapR<T>(out.ptr(), m, n).noalias() = CMapR<T>(av.ptr(), m, k) * CMapR<T>(bv.ptr(), k, n);
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {ai, bi}, [ai, bi, m, k, n](Tape<T>& t, std::size_t self) {
    CMapR<T> g(t.grad_of(self).data(), m, n);
    if (T* ga = t.accum(ai)) {
      MapR<T>(ga, m, k).noalias() += g * CMapR<T>(t.value(bi).ptr(), k, n).transpose();
    }
    if (T* gb = t.accum(bi)) {
      MapR<T>(gb, k, n).noalias() += CMapR<T>(t.value(ai).ptr(), m, k).transpose() * g;
    }
  });
}

namespace {

template <typename T>
Var<T> linear_impl(const Var<T>& x, const Var<T>& weight, const Var<T>* bias) {
  require_same_tape(x, weight);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = weight.value();
  if (wv.rank() != 2 || xv.rank() == 0 || xv.shape().back() != wv.dim(1)) {
    throw ShapeError(fmt::format("linear: input {} incompatible with weight {}", shape_str(xv.shape()),
                                 shape_str(wv.shape())));
  }
  const std::size_t d_out = wv.dim(0), d_in = wv.dim(1), rows = xv.size() / d_in;
  if (bias != nullptr && (bias->value().rank() != 1 || bias->value().dim(0) != d_out)) {
    throw ShapeError(fmt::format("linear: bias {} does not match d_out {}", shape_str(bias->shape()), d_out));
  }
  Shape out_shape = xv.shape();
  out_shape.back() = d_out;
  Tensor<T> out(out_shape);
  MapR<T> y(out.ptr(), rows, d_out);
  y.noalias() = CMapR<T>(xv.ptr(), rows, d_in) * CMapR<T>(wv.ptr(), d_out, d_in).transpose();
  std::vector<std::size_t> inputs{x.id(), weight.id()};
  std::size_t bi = 0;
  if (bias != nullptr) {
    bi = bias->id();
    inputs.push_back(bi);
    const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias->value().ptr(), d_out);
    y.rowwise() += b;
  }
  const std::size_t xi = x.id(), wi = weight.id();
  const bool has_bias = bias != nullptr;
  return x.tape().record(std::move(out), inputs,
                         [xi, wi, bi, has_bias, rows, d_in, d_out](Tape<T>& t, std::size_t self) {
                           CMapR<T> g(t.grad_of(self).data(), rows, d_out);
                           if (T* gx = t.accum(xi)) {
                             MapR<T>(gx, rows, d_in).noalias() += g * CMapR<T>(t.value(wi).ptr(), d_out, d_in);
                           }
                           if (T* gw = t.accum(wi)) {
                             MapR<T>(gw, d_out, d_in).noalias() +=
                                 g.transpose() * CMapR<T>(t.value(xi).ptr(), rows, d_in);
                           }
                           if (has_bias) {
                             if (T* gb = t.accum(bi)) {
                               Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(gb, d_out) += g.colwise().sum();
                             }
                           }
                         });
}

}  // namespace

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight) {
  return linear_impl<T>(x, weight, nullptr);
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  return linear_impl<T>(x, weight, &bias);
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "add");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {ai, bi}, [ai, bi](Tape<T>& t, std::size_t self) {
    const auto g = t.grad_of(self);
    if (T* ga = t.accum(ai)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (T* gb = t.accum(bi)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "sub");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {ai, bi}, [ai, bi](Tape<T>& t, std::size_t self) {
    const auto g = t.grad_of(self);
    if (T* ga = t.accum(ai)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (T* gb = t.accum(bi)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "mul");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {ai, bi}, [ai, bi](Tape<T>& t, std::size_t self) {
    const auto g = t.grad_of(self);
    if (T* ga = t.accum(ai)) {
      const Tensor<T>& bv = t.value(bi);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (T* gb = t.accum(bi)) {
      const Tensor<T>& av = t.value(ai);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  return unary<T>(
      a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  constexpr T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
  constexpr T inv_sqrt2pi = static_cast<T>(0.39894228040143267794);
  return unary<T>(
      x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [](T v, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        return cdf + v * pdf;
      });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return unary<T>(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> dropout(const Var<T>& x, double p, bool train, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError(fmt::format("dropout probability {} not in [0, 1)", p));
  if (!train || p == 0.0) return x;
  const Tensor<T>& xv = x.value();
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(xv.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& m : mask) m = u(rng) < p ? T{0} : keep_scale;
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * mask[i];
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi, mask = std::move(mask)](Tape<T>& t, std::size_t self) {
    T* gx = t.accum(xi);
    if (!gx) return;
    const auto g = t.grad_of(self);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

namespace {

// Returns normalized values and per-row reciprocal std; rows are the last axis.
template <typename T>
void normalize_rows(const Tensor<T>& x, double eps, Tensor<T>& xhat, std::vector<T>& rstd) {
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.size() / d;
  xhat = Tensor<T>(x.shape());
  rstd.assign(rows, T{0});
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.ptr() + r * d;
    T mu{0};
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<T>(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + static_cast<T>(eps));
    rstd[r] = rs;
    T* hr = xhat.ptr() + r * d;
    for (std::size_t j = 0; j < d; ++j) hr[j] = (xr[j] - mu) * rs;
  }
}

// dx = rstd * (g - mean(g) - xhat * mean(g * xhat)) per row.
template <typename T>
void normalize_rows_backward(std::span<const T> g, const Tensor<T>& xhat, const std::vector<T>& rstd, T* gx) {
  const std::size_t d = xhat.shape().back();
  for (std::size_t r = 0; r < rstd.size(); ++r) {
    const T* gr = g.data() + r * d;
    const T* hr = xhat.ptr() + r * d;
    T mg{0}, mgh{0};
    for (std::size_t j = 0; j < d; ++j) {
      mg += gr[j];
      mgh += gr[j] * hr[j];
    }
    mg /= static_cast<T>(d);
    mgh /= static_cast<T>(d);
    for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += rstd[r] * (gr[j] - mg - hr[j] * mgh);
  }
}

}  // namespace

template <typename T>
Var<T> layer_norm(const Var<T>& x, double eps) {
  const Tensor<T>& xv = x.value();
  if (xv.rank() == 0) throw AxisError("layer_norm on a scalar");
  Tensor<T> xhat;
  std::vector<T> rstd;
  normalize_rows(xv, eps, xhat, rstd);
  Tensor<T> out = xhat;
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {xi},
                         [xi, xhat = std::move(xhat), rstd = std::move(rstd)](Tape<T>& t, std::size_t self) {
                           if (T* gx = t.accum(xi)) normalize_rows_backward<T>(t.grad_of(self), xhat, rstd, gx);
                         });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps) {
  require_same_tape(x, gamma);
  const Tensor<T>& xv = x.value();
  if (xv.rank() == 0) throw AxisError("layer_norm on a scalar");
  const std::size_t d = xv.shape().back();
  if (gamma.value().size() != d || beta.value().size() != d) {
    throw ShapeError(fmt::format("layer_norm: affine params {} / {} do not match width {}",
                                 shape_str(gamma.shape()), shape_str(beta.shape()), d));
  }
  Tensor<T> xhat;
  std::vector<T> rstd;
  normalize_rows(xv, eps, xhat, rstd);
  Tensor<T> out(xv.shape());
  const T* gm = gamma.value().ptr();
  const T* bt = beta.value().ptr();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xhat[i] * gm[i % d] + bt[i % d];
  const std::size_t xi = x.id(), gi = gamma.id(), bi = beta.id();
  return x.tape().record(
      std::move(out), {xi, gi, bi},
      [xi, gi, bi, d, xhat = std::move(xhat), rstd = std::move(rstd)](Tape<T>& t, std::size_t self) {
        const auto g = t.grad_of(self);
        if (T* gg = t.accum(gi)) {
          for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * xhat[i];
        }
        if (T* gb = t.accum(bi)) {
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
        }
        if (T* gx = t.accum(xi)) {
          const T* gm = t.value(gi).ptr();
          Buffer<T> gh(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) gh[i] = g[i] * gm[i % d];
          normalize_rows_backward<T>(gh, xhat, rstd, gx);
        }
      });
}

namespace {

// Softmax of n values spaced `stride` apart. A NaN anywhere makes the whole
// row NaN through the normalizer.
template <typename T>
void softmax_strided(const T* in, T* out, std::size_t n, std::size_t stride) {
  T m = in[0];
  for (std::size_t j = 1; j < n; ++j) {
    if (in[j * stride] > m) m = in[j * stride];
  }
  T z{0};
  for (std::size_t j = 0; j < n; ++j) {
    out[j * stride] = std::exp(in[j * stride] - m);
    z += out[j * stride];
  }
  for (std::size_t j = 0; j < n; ++j) out[j * stride] /= z;
}

}  // namespace

template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis) {
  const Tensor<T>& xv = x.value();
  const AxisSplit s = split_at(xv.shape(), axis, "softmax");
  Tensor<T> out(xv.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.n * s.inner + i;
      softmax_strided(xv.ptr() + base, out.ptr() + base, s.n, s.inner);
    }
  }
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi, s](Tape<T>& t, std::size_t self) {
    T* gx = t.accum(xi);
    if (!gx) return;
    const auto g = t.grad_of(self);
    const Tensor<T>& y = t.value(self);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.n * s.inner + i;
        T dot{0};
        for (std::size_t j = 0; j < s.n; ++j) dot += g[base + j * s.inner] * y[base + j * s.inner];
        for (std::size_t j = 0; j < s.n; ++j) {
          const std::size_t idx = base + j * s.inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Var<T> mean(const Var<T>& x, std::size_t axis) {
  const Tensor<T>& xv = x.value();
  const AxisSplit s = split_at(xv.shape(), axis, "mean");
  if (s.n == 0) throw ShapeError("mean over an empty axis");
  Shape out_shape = xv.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor<T> out(out_shape);
  const T inv = T(1) / static_cast<T>(s.n);
  // A wider accumulator keeps float sums exact, so the mean ignores token order.
  using Acc = std::conditional_t<std::is_same_v<T, float>, double, long double>;
  std::vector<Acc> acc(s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::fill(acc.begin(), acc.end(), Acc{0});
    for (std::size_t j = 0; j < s.n; ++j) {
      const T* src = xv.ptr() + (o * s.n + j) * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) acc[i] += static_cast<Acc>(src[i]);
    }
    T* dst = out.ptr() + o * s.inner;
    for (std::size_t i = 0; i < s.inner; ++i) dst[i] = static_cast<T>(acc[i] / static_cast<Acc>(s.n));
  }
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi, s, inv](Tape<T>& t, std::size_t self) {
    T* gx = t.accum(xi);
    if (!gx) return;
    const auto g = t.grad_of(self);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t j = 0; j < s.n; ++j) {
        T* dst = gx + (o * s.n + j) * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += g[o * s.inner + i] * inv;
      }
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  T total{0};
  for (T v : xv.data()) total += v;
  const std::size_t xi = x.id();
  return x.tape().record(Tensor<T>::scalar(total), {xi}, [xi](Tape<T>& t, std::size_t self) {
    T* gx = t.accum(xi);
    if (!gx) return;
    const T g = t.grad_of(self)[0];
    const std::size_t n = t.value(xi).size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw AxisError(fmt::format("concat: axis {} out of range for shape {}", axis, shape_str(first)));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> widths, ids;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p);
    const Shape& sh = p.shape();
    bool ok = sh.size() == first.size();
    for (std::size_t d = 0; ok && d < sh.size(); ++d) ok = d == axis || sh[d] == first[d];
    if (!ok) {
      throw ShapeError(fmt::format("concat: {} incompatible with {} along axis {}", shape_str(sh),
                                   shape_str(first), axis));
    }
    out_shape[axis] += sh[axis];
    widths.push_back(sh[axis]);
    ids.push_back(p.id());
  }
  const AxisSplit s = split_at(out_shape, axis, "concat");
  Tensor<T> out(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor<T>& pv = parts[p].value();
    const std::size_t chunk = widths[p] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pv.ptr() + o * chunk, chunk, out.ptr() + o * s.n * s.inner + offset);
    }
    offset += chunk;
  }
  return parts[0].tape().record(std::move(out), ids, [ids, widths, s](Tape<T>& t, std::size_t self) {
    const auto g = t.grad_of(self);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const std::size_t chunk = widths[p] * s.inner;
      if (T* gp = t.accum(ids[p])) {
        for (std::size_t o = 0; o < s.outer; ++o) {
          const T* src = g.data() + o * s.n * s.inner + offset;
          for (std::size_t i = 0; i < chunk; ++i) gp[o * chunk + i] += src[i];
        }
      }
      offset += chunk;
    }
  });
}

template <typename T>
Var<T> transpose(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 2) throw ShapeError(fmt::format("transpose needs a matrix, got {}", shape_str(xv.shape())));
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  Tensor<T> out(Shape{c, r});
  MapR<T>(out.ptr(), c, r) = CMapR<T>(xv.ptr(), r, c).transpose();
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi, r, c](Tape<T>& t, std::size_t self) {
    if (T* gx = t.accum(xi)) MapR<T>(gx, r, c) += CMapR<T>(t.grad_of(self).data(), c, r).transpose();
  });
}

template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor<T>& xv = x.value();
  const AxisSplit s = split_at(xv.shape(), axis, "slice");
  if (begin > end || end > s.n) {
    throw ShapeError(fmt::format("slice [{}, {}) out of range for axis {} of {}", begin, end, axis,
                                 shape_str(xv.shape())));
  }
  Shape out_shape = xv.shape();
  out_shape[axis] = end - begin;
  Tensor<T> out(out_shape);
  const std::size_t chunk = (end - begin) * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xv.ptr() + (o * s.n + begin) * s.inner, chunk, out.ptr() + o * chunk);
  }
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi, s, begin, chunk](Tape<T>& t, std::size_t self) {
    T* gx = t.accum(xi);
    if (!gx) return;
    const auto g = t.grad_of(self);
    for (std::size_t o = 0; o < s.outer; ++o) {
      T* dst = gx + (o * s.n + begin) * s.inner;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += g[o * chunk + i];
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  out.set_requires_grad(false);
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi](Tape<T>& t, std::size_t self) {
    T* gx = t.accum(xi);
    if (!gx) return;
    const auto g = t.grad_of(self);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Var<T> embedding_add(const Var<T>& x, const Var<T>& table) {
  require_same_tape(x, table);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& tv = table.value();
  if (tv.rank() != 2 || xv.rank() < 2 || xv.dim(xv.rank() - 1) != tv.dim(1) ||
      xv.dim(xv.rank() - 2) != tv.dim(0)) {
    throw ShapeError(fmt::format("embedding_add: input {} does not end in table shape {}",
                                 shape_str(xv.shape()), shape_str(tv.shape())));
  }
  const std::size_t block = tv.size();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] + tv[i % block];
  const std::size_t xi = x.id(), ti = table.id();
  return x.tape().record(std::move(out), {xi, ti}, [xi, ti, block](Tape<T>& t, std::size_t self) {
    const auto g = t.grad_of(self);
    if (T* gx = t.accum(xi)) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (T* gt = t.accum(ti)) {
      for (std::size_t i = 0; i < g.size(); ++i) gt[i % block] += g[i];
    }
  });
}

template <typename T>
Var<T> expand(const Var<T>& x, std::size_t n) {
  const Tensor<T>& xv = x.value();
  Shape out_shape = xv.shape();
  out_shape.insert(out_shape.begin(), n);
  Tensor<T> out(out_shape);
  const std::size_t block = xv.size();
  for (std::size_t r = 0; r < n; ++r) std::copy_n(xv.ptr(), block, out.ptr() + r * block);
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi, n, block](Tape<T>& t, std::size_t self) {
    T* gx = t.accum(xi);
    if (!gx) return;
    const auto g = t.grad_of(self);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t i = 0; i < block; ++i) gx[i] += g[r * block + i];
    }
  });
}

template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t seq_len, std::size_t heads) {
  require_same_tape(q, k);
  require_same_tape(q, v);
  require_same_shape(q, k, "attention");
  require_same_shape(q, v, "attention");
  const Tensor<T>& qv = q.value();
  if (qv.rank() < 2) throw ShapeError("attention: inputs must be at least rank 2");
  const std::size_t d = qv.shape().back();
  const std::size_t rows = qv.size() / d;
  if (seq_len == 0 || rows % seq_len != 0) {
    throw ShapeError(fmt::format("attention: {} rows not divisible by sequence length {}", rows, seq_len));
  }
  if (heads == 0 || d % heads != 0) {
    throw ShapeError(fmt::format("attention: width {} not divisible by {} heads", d, heads));
  }
  const std::size_t n_seq = rows / seq_len, dh = d / heads, S = seq_len;
  const T sc = T(1) / std::sqrt(static_cast<T>(dh));
  const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));

  auto probs = std::make_shared<std::vector<T>>(n_seq * heads * S * S);
  Tensor<T> out(qv.shape());
  const T* kp = k.value().ptr();
  const T* vp = v.value().ptr();
  for (std::size_t b = 0; b < n_seq; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = b * S * d + h * dh;
      CStridedR<T> Q(qv.ptr() + off, S, dh, stride);
      CStridedR<T> K(kp + off, S, dh, stride);
      CStridedR<T> V(vp + off, S, dh, stride);
      MapR<T> P(probs->data() + (b * heads + h) * S * S, S, S);
      P.noalias() = (Q * K.transpose()) * sc;
      for (std::size_t r = 0; r < S; ++r) softmax_strided(P.data() + r * S, P.data() + r * S, S, 1);
      StridedR<T>(out.ptr() + off, S, dh, stride).noalias() = P * V;
    }
  }
  const std::size_t qi = q.id(), ki = k.id(), vi = v.id();
  return q.tape().record(
      std::move(out), {qi, ki, vi},
      [qi, ki, vi, n_seq, heads, S, d, dh, sc, probs](Tape<T>& t, std::size_t self) {
        const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));
        const T* g = t.grad_of(self).data();
        const T* qp = t.value(qi).ptr();
        const T* kp = t.value(ki).ptr();
        const T* vp = t.value(vi).ptr();
        T* gq = t.accum(qi);
        T* gk = t.accum(ki);
        T* gv = t.accum(vi);
        MatR<T> dP(S, S), dS(S, S);
        for (std::size_t b = 0; b < n_seq; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = b * S * d + h * dh;
            CMapR<T> P(probs->data() + (b * heads + h) * S * S, S, S);
            CStridedR<T> dO(g + off, S, dh, stride);
            if (gv) StridedR<T>(gv + off, S, dh, stride).noalias() += P.transpose() * dO;
            if (!gq && !gk) continue;
            dP.noalias() = dO * CStridedR<T>(vp + off, S, dh, stride).transpose();
            const auto rowdot = (dP.array() * P.array()).rowwise().sum().eval();
            dS = (P.array() * (dP.array().colwise() - rowdot)).matrix() * sc;
            if (gq) StridedR<T>(gq + off, S, dh, stride).noalias() += dS * CStridedR<T>(kp + off, S, dh, stride);
            if (gk) {
              StridedR<T>(gk + off, S, dh, stride).noalias() +=
                  dS.transpose() * CStridedR<T>(qp + off, S, dh, stride);
            }
          }
        }
      });
}

template <typename T>
Var<T> cross_entropy_with_logits(const Var<T>& logits, std::span<const int> labels) {
  const Tensor<T>& lv = logits.value();
  if (lv.rank() != 2 || lv.dim(0) != labels.size()) {
    throw ShapeError(fmt::format("cross_entropy: logits {} vs {} labels", shape_str(lv.shape()), labels.size()));
  }
  const std::size_t B = lv.dim(0), K = lv.dim(1);
  std::vector<int> y(labels.begin(), labels.end());
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= K) {
      throw DataError(fmt::format("label {} outside [0, {})", label, K));
    }
  }
  auto probs = std::make_shared<std::vector<T>>(B * K);
  T loss{0};
  for (std::size_t b = 0; b < B; ++b) {
    const T* row = lv.ptr() + b * K;
    T m = row[0];
    for (std::size_t j = 1; j < K; ++j) {
      if (row[j] > m) m = row[j];
    }
    T z{0};
    for (std::size_t j = 0; j < K; ++j) z += std::exp(row[j] - m);
    const T lse = m + std::log(z);
    loss += lse - row[y[b]];
    for (std::size_t j = 0; j < K; ++j) (*probs)[b * K + j] = std::exp(row[j] - lse);
  }
  loss /= static_cast<T>(B);
  const std::size_t li = logits.id();
  return logits.tape().record(Tensor<T>::scalar(loss), {li}, [li, B, K, y = std::move(y), probs](Tape<T>& t, std::size_t self) {
    T* gl = t.accum(li);
    if (!gl) return;
    const T g = t.grad_of(self)[0] / static_cast<T>(B);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t j = 0; j < K; ++j) {
        const T onehot = static_cast<std::size_t>(y[b]) == j ? T(1) : T(0);
        gl[b * K + j] += g * ((*probs)[b * K + j] - onehot);
      }
    }
  });
}

#define CLAIP_INSTANTIATE(T)                                                                     \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                          \
  template Var<T> linear(const Var<T>&, const Var<T>&);                                          \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                           \
  template Var<T> add(const Var<T>&, const Var<T>&);                                             \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                             \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                             \
  template Var<T> scale(const Var<T>&, T);                                                       \
  template Var<T> gelu(const Var<T>&);                                                           \
  template Var<T> sigmoid(const Var<T>&);                                                        \
  template Var<T> dropout(const Var<T>&, double, bool, std::mt19937_64&);                        \
  template Var<T> layer_norm(const Var<T>&, double);                                             \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, double);               \
  template Var<T> softmax(const Var<T>&, std::size_t);                                           \
  template Var<T> mean(const Var<T>&, std::size_t);                                              \
  template Var<T> sum(const Var<T>&);                                                            \
  template Var<T> concat(std::span<const Var<T>>, std::size_t);                                  \
  template Var<T> transpose(const Var<T>&);                                                      \
  template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t);                   \
  template Var<T> reshape(const Var<T>&, Shape);                                                 \
  template Var<T> embedding_add(const Var<T>&, const Var<T>&);                                   \
  template Var<T> expand(const Var<T>&, std::size_t);                                            \
  template Var<T> attention(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t); \
  template Var<T> cross_entropy_with_logits(const Var<T>&, std::span<const int>);

CLAIP_INSTANTIATE(float)
CLAIP_INSTANTIATE(double)
#undef CLAIP_INSTANTIATE

}  // namespace claip::ops
