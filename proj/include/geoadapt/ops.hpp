// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

// Differentiable primitives. Each op computes its value eagerly and records a
// backward closure that accumulates into its inputs' gradients. Broadcasting
// is limited to scalars and per-channel bias vectors; any other shape
// mismatch raises DimensionError.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geoadapt/autodiff.hpp"
#include "geoadapt/kernels.hpp"
#include "geoadapt/tensor.hpp"

namespace geoadapt::ops {

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

inline void require_rank(const Shape& s, int rank, const char* op) {
  require(static_cast<int>(s.size()) == rank,
          std::string(op) + " expects rank " + std::to_string(rank) + ", got " + shape_str(s));
}

inline void require_same(const Shape& a, const Shape& b, const char* op) {
  require(a == b, std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                      " do not match");
}

template <typename T>
T fault(const char* op) {
  return static_cast<T>(geoadapt::testing::fault_factor(op));
}

}  // namespace detail

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  detail::require(sa.size() == 2 && sb.size() == 2 && sa[1] == sb[0],
                  "matmul: cannot multiply " + shape_str(sa) + " by " + shape_str(sb));
  const std::int64_t m = sa[0], k = sa[1], n = sb[1];
  BasicTensor<T> out(Shape{m, n});
  kernels::gemm(false, false, m, n, k, a.value().data(), b.value().data(), out.data(), false);
  return a.tape->record(std::move(out), {a, b}, [m, n, k](Tape<T>& t, int self) {
    const auto& g = t.grad_of(self);
    const int ia = t.input_id(self, 0), ib = t.input_id(self, 1);
    if (auto* ga = t.grad_target(ia))
      kernels::gemm(false, true, m, k, n, g.data(), t.value_of(ib).data(), ga->data(), true);
    if (auto* gb = t.grad_target(ib))
      kernels::gemm(true, false, k, n, m, t.value_of(ia).data(), g.data(), gb->data(), true);
  });
}

// a[m x k] * b[n x k]^T -> [m x n]
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  detail::require(sa.size() == 2 && sb.size() == 2 && sa[1] == sb[1],
                  "matmul_nt: cannot multiply " + shape_str(sa) + " by transpose of " +
                      shape_str(sb));
  const std::int64_t m = sa[0], k = sa[1], n = sb[0];
  BasicTensor<T> out(Shape{m, n});
  kernels::gemm(false, true, m, n, k, a.value().data(), b.value().data(), out.data(), false);
  return a.tape->record(std::move(out), {a, b}, [m, n, k](Tape<T>& t, int self) {
    const auto& g = t.grad_of(self);
    const int ia = t.input_id(self, 0), ib = t.input_id(self, 1);
    if (auto* ga = t.grad_target(ia))
      kernels::gemm(false, false, m, k, n, g.data(), t.value_of(ib).data(), ga->data(), true);
    if (auto* gb = t.grad_target(ib))
      kernels::gemm(true, false, n, k, m, g.data(), t.value_of(ia).data(), gb->data(), true);
  });
}

/// x[n x in] * w[in x out] + bias[out]
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, std::optional<Var<T>> bias = std::nullopt) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  detail::require(sx.size() == 2 && sw.size() == 2 && sx[1] == sw[0],
                  "linear: input " + shape_str(sx) + " incompatible with weight " + shape_str(sw));
  const std::int64_t n = sx[0], in = sx[1], out_dim = sw[1];
  BasicTensor<T> out(Shape{n, out_dim});
  kernels::gemm(false, false, n, out_dim, in, x.value().data(), w.value().data(), out.data(), false);
  if (bias) {
    detail::require(bias->shape() == Shape{out_dim},
                    "linear: bias " + shape_str(bias->shape()) + " for output width " +
                        std::to_string(out_dim));
    const T* b = bias->value().data();
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < out_dim; ++j) out[i * out_dim + j] += b[j];
  }
  auto fn = [n, in, out_dim, has_bias = bias.has_value()](Tape<T>& t, int self) {
    const T f = detail::fault<T>("linear");
    BasicTensor<T> g = t.grad_of(self);
    if (f != T(1))
      for (auto& v : g.values()) v *= f;
    const int ix = t.input_id(self, 0), iw = t.input_id(self, 1);
    if (auto* gx = t.grad_target(ix))
      kernels::gemm(false, true, n, in, out_dim, g.data(), t.value_of(iw).data(), gx->data(), true);
    if (auto* gw = t.grad_target(iw))
      kernels::gemm(true, false, in, out_dim, n, t.value_of(ix).data(), g.data(), gw->data(), true);
    if (has_bias) {
      if (auto* gb = t.grad_target(t.input_id(self, 2))) {
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t j = 0; j < out_dim; ++j) (*gb)[j] += g[i * out_dim + j];
      }
    }
  };
  if (bias) return x.tape->record(std::move(out), {x, w, *bias}, fn);
  return x.tape->record(std::move(out), {x, w}, fn);
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same(a.shape(), b.shape(), "add");
  BasicTensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape->record(std::move(out), {a, b}, [](Tape<T>& t, int self) {
    const auto& g = t.grad_of(self);
    for (std::size_t w = 0; w < 2; ++w)
      if (auto* gi = t.grad_target(t.input_id(self, w)))
        for (std::int64_t i = 0; i < g.size(); ++i) (*gi)[i] += g[i];
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same(a.shape(), b.shape(), "sub");
  BasicTensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape->record(std::move(out), {a, b}, [](Tape<T>& t, int self) {
    const auto& g = t.grad_of(self);
    if (auto* ga = t.grad_target(t.input_id(self, 0)))
      for (std::int64_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    if (auto* gb = t.grad_target(t.input_id(self, 1)))
      for (std::int64_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
  });
}

// Elementwise (Hadamard) product.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same(a.shape(), b.shape(), "mul");
  BasicTensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->record(std::move(out), {a, b}, [](Tape<T>& t, int self) {
    const auto& g = t.grad_of(self);
    const int ia = t.input_id(self, 0), ib = t.input_id(self, 1);
    if (auto* ga = t.grad_target(ia)) {
      const auto& bv = t.value_of(ib);
      for (std::int64_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (auto* gb = t.grad_target(ib)) {
      const auto& av = t.value_of(ia);
      for (std::int64_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T s) {
  BasicTensor<T> out = x.value();
  for (auto& v : out.values()) v *= s;
  return x.tape->record(std::move(out), {x}, [s](Tape<T>& t, int self) {
    const auto& g = t.grad_of(self);
    if (auto* gx = t.grad_target(t.input_id(self, 0)))
      for (std::int64_t i = 0; i < g.size(); ++i) (*gx)[i] += s * g[i];
  });
}

// s - x, elementwise.
template <typename T>
Var<T> rsub_scalar(T s, Var<T> x) {
  BasicTensor<T> out = x.value();
  for (auto& v : out.values()) v = s - v;
  return x.tape->record(std::move(out), {x}, [](Tape<T>& t, int self) {
    const auto& g = t.grad_of(self);
    if (auto* gx = t.grad_target(t.input_id(self, 0)))
      for (std::int64_t i = 0; i < g.size(); ++i) (*gx)[i] -= g[i];
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  BasicTensor<T> out = x.value();
  for (auto& v : out.values()) {
    // Split on sign so exp never overflows.
    if (v >= T(0)) {
      v = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      v = e / (T(1) + e);
    }
  }
  return x.tape->record(std::move(out), {x}, [](Tape<T>& t, int self) {
    const auto& g = t.grad_of(self);
    const auto& y = t.value_of(self);
    const T f = detail::fault<T>("sigmoid");
    if (auto* gx = t.grad_target(t.input_id(self, 0)))
      for (std::int64_t i = 0; i < g.size(); ++i) (*gx)[i] += f * g[i] * y[i] * (T(1) - y[i]);
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  BasicTensor<T> out = x.value();
  for (auto& v : out.values()) v = (v > T(0) || std::isnan(v)) ? v : T(0);  // NaN propagates
  return x.tape->record(std::move(out), {x}, [](Tape<T>& t, int self) {
    const auto& g = t.grad_of(self);
    const auto& in = t.value_of(t.input_id(self, 0));
    if (auto* gx = t.grad_target(t.input_id(self, 0)))
      for (std::int64_t i = 0; i < g.size(); ++i)
        if (in[i] > T(0)) (*gx)[i] += g[i];
  });
}

// Exact (erf-based) GELU.
template <typename T>
Var<T> gelu(Var<T> x) {
  BasicTensor<T> out = x.value();
  constexpr T kInvSqrt2 = T(0.70710678118654752440);
  for (auto& v : out.values()) v = T(0.5) * v * (T(1) + std::erf(v * kInvSqrt2));
  return x.tape->record(std::move(out), {x}, [](Tape<T>& t, int self) {
    const auto& g = t.grad_of(self);
    const auto& in = t.value_of(t.input_id(self, 0));
    const T f = detail::fault<T>("gelu");
    constexpr T kInvSqrt2 = T(0.70710678118654752440);
    constexpr T kInvSqrt2Pi = T(0.39894228040143267794);
    if (auto* gx = t.grad_target(t.input_id(self, 0)))
      for (std::int64_t i = 0; i < g.size(); ++i) {
        const T v = in[i];
        const T cdf = T(0.5) * (T(1) + std::erf(v * kInvSqrt2));
        const T pdf = kInvSqrt2Pi * std::exp(T(-0.5) * v * v);
        (*gx)[i] += f * g[i] * (cdf + v * pdf);
      }
  });
}

/// Softmax along `axis`, computed with max subtraction.
template <typename T>
Var<T> softmax(Var<T> x, int axis) {
  const Shape& s = x.shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  detail::require(axis >= 0 && axis < static_cast<int>(s.size()),
                  "softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(s));
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
  const std::int64_t len = s[static_cast<std::size_t>(axis)];
  BasicTensor<T> out = x.value();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t in = 0; in < inner; ++in) {
      T* base = out.data() + o * len * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::int64_t i = 0; i < len; ++i) mx = std::max(mx, base[i * inner]);
      T sum = 0;
      for (std::int64_t i = 0; i < len; ++i) {
        base[i * inner] = std::exp(base[i * inner] - mx);
        sum += base[i * inner];
      }
      const T inv = T(1) / sum;
      for (std::int64_t i = 0; i < len; ++i) base[i * inner] *= inv;
    }
  return x.tape->record(std::move(out), {x}, [outer, inner, len](Tape<T>& t, int self) {
    const auto& g = t.grad_of(self);
    const auto& y = t.value_of(self);
    const T f = detail::fault<T>("softmax");
    auto* gx = t.grad_target(t.input_id(self, 0));
    if (!gx) return;
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t in = 0; in < inner; ++in) {
        const std::int64_t off = o * len * inner + in;
        T dot = 0;
        for (std::int64_t i = 0; i < len; ++i) dot += g[off + i * inner] * y[off + i * inner];
        for (std::int64_t i = 0; i < len; ++i)
          (*gx)[off + i * inner] += f * y[off + i * inner] * (g[off + i * inner] - dot);
      }
  });
}

template <typename T>
Var<T> softmax_rows(Var<T> x) {
  return softmax(x, -1);
}

/// Layer normalisation over the last axis of x[n x d].
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
  const Shape& s = x.shape();
  detail::require_rank(s, 2, "layer_norm");
  const std::int64_t n = s[0], d = s[1];
  detail::require(gain.shape() == Shape{d} && bias.shape() == Shape{d},
                  "layer_norm: affine parameters must have shape [" + std::to_string(d) + "]");
  BasicTensor<T> out(s);
  BasicTensor<T> xhat(s);
  BasicTensor<T> inv_std(Shape{n});
  const auto& xv = x.value();
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::int64_t i = 0; i < n; ++i) {
    T mean = 0;
    for (std::int64_t j = 0; j < d; ++j) mean += xv[i * d + j];
    mean /= T(d);
    T var = 0;
    for (std::int64_t j = 0; j < d; ++j) {
      const T c = xv[i * d + j] - mean;
      var += c * c;
    }
    var /= T(d);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::int64_t j = 0; j < d; ++j) {
      const T h = (xv[i * d + j] - mean) * is;
      xhat[i * d + j] = h;
      out[i * d + j] = h * gv[j] + bv[j];
    }
  }
  return x.tape->record(
      std::move(out), {x, gain, bias},
      [n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t, int self) {
        const auto& g = t.grad_of(self);
        const T f = detail::fault<T>("layer_norm");
        const auto& gv = t.value_of(t.input_id(self, 1));
        if (auto* gg = t.grad_target(t.input_id(self, 1)))
          for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < d; ++j) (*gg)[j] += g[i * d + j] * xhat[i * d + j];
        if (auto* gb = t.grad_target(t.input_id(self, 2)))
          for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < d; ++j) (*gb)[j] += g[i * d + j];
        if (auto* gx = t.grad_target(t.input_id(self, 0))) {
          for (std::int64_t i = 0; i < n; ++i) {
            T sum_dh = 0, sum_dh_h = 0;
            for (std::int64_t j = 0; j < d; ++j) {
              const T dh = g[i * d + j] * gv[j];
              sum_dh += dh;
              sum_dh_h += dh * xhat[i * d + j];
            }
            const T inv_d = T(1) / T(d);
            for (std::int64_t j = 0; j < d; ++j) {
              const T dh = g[i * d + j] * gv[j];
              (*gx)[i * d + j] +=
                  f * inv_std[i] * (dh - inv_d * sum_dh - xhat[i * d + j] * inv_d * sum_dh_h);
            }
          }
        }
      });
}

/// Concatenates rank-2 tensors along axis 0 (rows) or 1 (columns).
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis) {
  detail::require(!parts.empty(), "concat: no inputs");
  detail::require(axis == 0 || axis == 1, "concat: axis must be 0 or 1");
  for (const auto& p : parts) detail::require_rank(p.shape(), 2, "concat");
  const std::int64_t other = parts[0].dim(1 - axis);
  std::int64_t total = 0;
  std::vector<std::int64_t> extents;
  for (const auto& p : parts) {
    detail::require(p.dim(1 - axis) == other,
                    "concat: mismatched extent " + shape_str(p.shape()) + " vs " +
                        shape_str(parts[0].shape()));
    extents.push_back(p.dim(axis));
    total += p.dim(axis);
  }
  const std::int64_t rows = axis == 0 ? total : other;
  const std::int64_t cols = axis == 0 ? other : total;
  BasicTensor<T> out(Shape{rows, cols});
  std::int64_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& v = parts[p].value();
    const std::int64_t pr = v.dim(0), pc = v.dim(1);
    for (std::int64_t i = 0; i < pr; ++i)
      for (std::int64_t j = 0; j < pc; ++j) {
        if (axis == 0) {
          out[(offset + i) * cols + j] = v[i * pc + j];
        } else {
          out[i * cols + offset + j] = v[i * pc + j];
        }
      }
    offset += extents[p];
  }
  return parts[0].tape->record(std::move(out), parts, [axis, extents, cols](Tape<T>& t, int self) {
    const auto& g = t.grad_of(self);
    std::int64_t offset = 0;
    for (std::size_t p = 0; p < extents.size(); ++p) {
      const int id = t.input_id(self, p);
      if (auto* gp = t.grad_target(id)) {
        const std::int64_t pr = gp->dim(0), pc = gp->dim(1);
        for (std::int64_t i = 0; i < pr; ++i)
          for (std::int64_t j = 0; j < pc; ++j) {
            (*gp)[i * pc + j] +=
                axis == 0 ? g[(offset + i) * cols + j] : g[i * cols + offset + j];
          }
      }
      offset += extents[p];
    }
  });
}

/// Contiguous slice of a rank-2 tensor along axis 0 or 1.
template <typename T>
Var<T> slice(Var<T> x, int axis, std::int64_t begin, std::int64_t length) {
  const Shape& s = x.shape();
  detail::require_rank(s, 2, "slice");
  detail::require(axis == 0 || axis == 1, "slice: axis must be 0 or 1");
  detail::require(begin >= 0 && length > 0 && begin + length <= s[static_cast<std::size_t>(axis)],
                  "slice: range [" + std::to_string(begin) + ", " +
                      std::to_string(begin + length) + ") out of bounds for " + shape_str(s));
  const std::int64_t rows = s[0], cols = s[1];
  const std::int64_t orow = axis == 0 ? length : rows;
  const std::int64_t ocol = axis == 0 ? cols : length;
  BasicTensor<T> out(Shape{orow, ocol});
  const auto& v = x.value();
  for (std::int64_t i = 0; i < orow; ++i)
    for (std::int64_t j = 0; j < ocol; ++j)
      out[i * ocol + j] = axis == 0 ? v[(begin + i) * cols + j] : v[i * cols + begin + j];
  return x.tape->record(std::move(out), {x}, [axis, begin, orow, ocol, cols](Tape<T>& t, int self) {
    const auto& g = t.grad_of(self);
    if (auto* gx = t.grad_target(t.input_id(self, 0)))
      for (std::int64_t i = 0; i < orow; ++i)
        for (std::int64_t j = 0; j < ocol; ++j) {
          if (axis == 0) {
            (*gx)[(begin + i) * cols + j] += g[i * ocol + j];
          } else {
            (*gx)[i * cols + begin + j] += g[i * ocol + j];
          }
        }
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  BasicTensor<T> out = x.value().reshaped(std::move(shape));
  return x.tape->record(std::move(out), {x}, [](Tape<T>& t, int self) {
    const auto& g = t.grad_of(self);
    if (auto* gx = t.grad_target(t.input_id(self, 0)))
      for (std::int64_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
  });
}

template <typename T>
Var<T> transpose(Var<T> x) {
  const Shape& s = x.shape();
  detail::require_rank(s, 2, "transpose");
  const std::int64_t r = s[0], c = s[1];
  BasicTensor<T> out(Shape{c, r});
  const auto& v = x.value();
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  return x.tape->record(std::move(out), {x}, [r, c](Tape<T>& t, int self) {
    const auto& g = t.grad_of(self);
    if (auto* gx = t.grad_target(t.input_id(self, 0)))
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) (*gx)[i * c + j] += g[j * r + i];
  });
}

// [h*w x d] tokens -> [d x h x w] feature map.
template <typename T>
Var<T> tokens_to_map(Var<T> tokens, std::int64_t h, std::int64_t w) {
  detail::require_rank(tokens.shape(), 2, "tokens_to_map");
  detail::require(tokens.dim(0) == h * w, "tokens_to_map: " + shape_str(tokens.shape()) +
                                              " is not a " + std::to_string(h) + "x" +
                                              std::to_string(w) + " grid");
  const std::int64_t d = tokens.dim(1);
  return reshape(transpose(tokens), Shape{d, h, w});
}

// [c x h x w] feature map -> [h*w x c] tokens.
template <typename T>
Var<T> map_to_tokens(Var<T> map) {
  detail::require_rank(map.shape(), 3, "map_to_tokens");
  const std::int64_t c = map.dim(0), hw = map.dim(1) * map.dim(2);
  return transpose(reshape(map, Shape{c, hw}));
}

/// Cross-correlation of x[c_in x H x W] with w[c_out x c_in x kh x kw].
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, std::optional<Var<T>> bias, std::int64_t stride,
              std::int64_t pad) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  detail::require_rank(sx, 3, "conv2d input");
  detail::require_rank(sw, 4, "conv2d weight");
  detail::require(sw[1] == sx[0], "conv2d: weight " + shape_str(sw) + " expects " +
                                      std::to_string(sw[1]) + " input channels, input is " +
                                      shape_str(sx));
  detail::require(stride >= 1 && pad >= 0, "conv2d: stride must be >= 1 and pad >= 0");
  const kernels::ConvGeometry geo{sx[0], sx[1], sx[2], sw[2], sw[3], stride, pad};
  detail::require(sw[2] <= sx[1] + 2 * pad && sw[3] <= sx[2] + 2 * pad,
                  "conv2d: kernel " + shape_str(sw) + " larger than padded input " +
                      shape_str(sx) + " (pad " + std::to_string(pad) + ")");
  const std::int64_t c_out = sw[0];
  const std::int64_t oh = geo.out_h(), ow = geo.out_w();
  const std::int64_t patch = geo.c_in * geo.kh * geo.kw;
  BasicTensor<T> cols(Shape{patch, oh * ow});
  kernels::im2col(geo, x.value().data(), cols.data());
  BasicTensor<T> out(Shape{c_out, oh, ow});
  kernels::gemm(false, false, c_out, oh * ow, patch, w.value().data(), cols.data(), out.data(),
                false);
  if (bias) {
    detail::require(bias->shape() == Shape{c_out}, "conv2d: bias " + shape_str(bias->shape()) +
                                                       " for " + std::to_string(c_out) +
                                                       " output channels");
    const auto& b = bias->value();
    for (std::int64_t c = 0; c < c_out; ++c)
      for (std::int64_t p = 0; p < oh * ow; ++p) out[c * oh * ow + p] += b[c];
  }
  auto fn = [geo, c_out, oh, ow, patch, cols = std::move(cols), has_bias = bias.has_value()](
                Tape<T>& t, int self) {
    BasicTensor<T> g = t.grad_of(self);
    const T f = detail::fault<T>("conv2d");
    if (f != T(1))
      for (auto& v : g.values()) v *= f;
    const int ix = t.input_id(self, 0), iw = t.input_id(self, 1);
    if (auto* gw = t.grad_target(iw))
      kernels::gemm(false, true, c_out, patch, oh * ow, g.data(), cols.data(), gw->data(), true);
    if (auto* gx = t.grad_target(ix)) {
      std::vector<T> dcols(static_cast<std::size_t>(patch * oh * ow));
      kernels::gemm(true, false, patch, oh * ow, c_out, t.value_of(iw).data(), g.data(),
                    dcols.data(), false);
      kernels::col2im_accumulate(geo, dcols.data(), gx->data());
    }
    if (has_bias) {
      if (auto* gb = t.grad_target(t.input_id(self, 2)))
        for (std::int64_t c = 0; c < c_out; ++c)
          for (std::int64_t p = 0; p < oh * ow; ++p) (*gb)[c] += g[c * oh * ow + p];
    }
  };
  if (bias) return x.tape->record(std::move(out), {x, w, *bias}, std::move(fn));
  return x.tape->record(std::move(out), {x, w}, std::move(fn));
}

/// Bilinear resampling of x[c x H x W] to [c x out_h x out_w] using
/// half-pixel centres (align_corners = false).
template <typename T>
Var<T> bilinear_resize(Var<T> x, std::int64_t out_h, std::int64_t out_w) {
  const Shape& s = x.shape();
  detail::require_rank(s, 3, "bilinear_resize");
  detail::require(out_h >= 1 && out_w >= 1, "bilinear_resize: target extents must be >= 1");
  const std::int64_t c = s[0], h = s[1], w = s[2];
  if (h == out_h && w == out_w) return reshape(x, s);
  auto ay = kernels::linear_axis(h, out_h);
  auto ax = kernels::linear_axis(w, out_w);
  BasicTensor<T> out(Shape{c, out_h, out_w});
  kernels::bilinear_forward(c, h, w, ay, ax, x.value().data(), out.data());
  return x.tape->record(std::move(out), {x},
                        [c, h, w, ay = std::move(ay), ax = std::move(ax)](Tape<T>& t, int self) {
                          const auto& g = t.grad_of(self);
                          if (auto* gx = t.grad_target(t.input_id(self, 0)))
                            kernels::bilinear_backward(c, h, w, ay, ax, g.data(), gx->data());
                        });
}

// Mean over rows: [n x d] -> [1 x d].
template <typename T>
Var<T> mean_rows(Var<T> x) {
  detail::require_rank(x.shape(), 2, "mean_rows");
  const std::int64_t n = x.dim(0), d = x.dim(1);
  BasicTensor<T> out(Shape{1, d});
  const auto& v = x.value();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < d; ++j) out[j] += v[i * d + j];
  for (auto& o : out.values()) o /= T(n);
  return x.tape->record(std::move(out), {x}, [n, d](Tape<T>& t, int self) {
    const auto& g = t.grad_of(self);
    if (auto* gx = t.grad_target(t.input_id(self, 0)))
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < d; ++j) (*gx)[i * d + j] += g[j] / T(n);
  });
}

// [groups*n x d] -> [n x d], averaging row i of every group.
template <typename T>
Var<T> group_mean(Var<T> x, std::int64_t groups) {
  detail::require_rank(x.shape(), 2, "group_mean");
  detail::require(groups >= 1 && x.dim(0) % groups == 0,
                  "group_mean: " + std::to_string(x.dim(0)) + " rows not divisible into " +
                      std::to_string(groups) + " groups");
  const std::int64_t n = x.dim(0) / groups, d = x.dim(1);
  BasicTensor<T> out(Shape{n, d});
  const auto& v = x.value();
  for (std::int64_t gi = 0; gi < groups; ++gi)
    for (std::int64_t i = 0; i < n * d; ++i) out[i] += v[gi * n * d + i];
  for (auto& o : out.values()) o /= T(groups);
  return x.tape->record(std::move(out), {x}, [groups, n, d](Tape<T>& t, int self) {
    const auto& g = t.grad_of(self);
    if (auto* gx = t.grad_target(t.input_id(self, 0)))
      for (std::int64_t gi = 0; gi < groups; ++gi)
        for (std::int64_t i = 0; i < n * d; ++i) (*gx)[gi * n * d + i] += g[i] / T(groups);
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T s = 0;
  for (T v : x.value().values()) s += v;
  return x.tape->record(BasicTensor<T>::scalar(s), {x}, [](Tape<T>& t, int self) {
    const T g = t.grad_of(self)[0];
    if (auto* gx = t.grad_target(t.input_id(self, 0)))
      for (auto& v : gx->values()) v += g;
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  return scale(sum(x), T(1) / T(x.value().size()));
}

/// Mean per-pixel cross-entropy of logits[C x H x W] against labels[H*W].
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> labels) {
  const Shape& s = logits.shape();
  detail::require_rank(s, 3, "cross_entropy");
  const std::int64_t classes = s[0], pixels = s[1] * s[2];
  detail::require(static_cast<std::int64_t>(labels.size()) == pixels,
                  "cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                      shape_str(s));
  const auto& z = logits.value();
  BasicTensor<T> prob(s);
  double total = 0.0;
  for (std::int64_t p = 0; p < pixels; ++p) {
    const int y = labels[static_cast<std::size_t>(p)];
    if (y < 0 || y >= classes) {
      throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) +
                      ")");
    }
    T mx = -std::numeric_limits<T>::infinity();
    for (std::int64_t c = 0; c < classes; ++c) mx = std::max(mx, z[c * pixels + p]);
    T denom = 0;
    for (std::int64_t c = 0; c < classes; ++c) {
      const T e = std::exp(z[c * pixels + p] - mx);
      prob[c * pixels + p] = e;
      denom += e;
    }
    for (std::int64_t c = 0; c < classes; ++c) prob[c * pixels + p] /= denom;
    total += static_cast<double>(std::log(denom) + mx - z[y * pixels + p]);
  }
  const T loss = static_cast<T>(total / static_cast<double>(pixels));
  std::vector<int> ys(labels.begin(), labels.end());
  return logits.tape->record(
      BasicTensor<T>::scalar(loss), {logits},
      [classes, pixels, prob = std::move(prob), ys = std::move(ys)](Tape<T>& t, int self) {
        const T g = t.grad_of(self)[0] / T(pixels);
        if (auto* gz = t.grad_target(t.input_id(self, 0))) {
          for (std::int64_t c = 0; c < classes; ++c)
            for (std::int64_t p = 0; p < pixels; ++p) {
              const T onehot = ys[static_cast<std::size_t>(p)] == c ? T(1) : T(0);
              (*gz)[c * pixels + p] += g * (prob[c * pixels + p] - onehot);
            }
        }
      });
}

}  // namespace geoadapt::ops
