// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

// Raw loops behind the differentiable ops. No shape checking happens here;
// callers in ops.hpp validate extents before dispatching.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace geoadapt::kernels {

// C[m x n] (+)= op(A) * op(B) where op(A) is m x k and op(B) is k x n.
// A is stored m x k, or k x m when trans_a. B is stored k x n, or n x k when trans_b.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, const T* a,
          const T* b, T* c, bool accumulate) {
  std::vector<T> a_packed;
  std::vector<T> b_packed;
  if (trans_a) {
    a_packed.resize(static_cast<std::size_t>(m * k));
    for (std::int64_t p = 0; p < k; ++p)
      for (std::int64_t i = 0; i < m; ++i) a_packed[i * k + p] = a[p * m + i];
    a = a_packed.data();
  }
  if (trans_b) {
    b_packed.resize(static_cast<std::size_t>(k * n));
    for (std::int64_t j = 0; j < n; ++j)
      for (std::int64_t p = 0; p < k; ++p) b_packed[p * n + j] = b[j * k + p];
    b = b_packed.data();
  }
  if (!accumulate) std::fill(c, c + m * n, T(0));
  constexpr std::int64_t kBlock = 64;
  for (std::int64_t p0 = 0; p0 < k; p0 += kBlock) {
    const std::int64_t p1 = std::min(k, p0 + kBlock);
    for (std::int64_t i = 0; i < m; ++i) {
      T* __restrict crow = c + i * n;
      const T* arow = a + i * k;
      for (std::int64_t p = p0; p < p1; ++p) {
        const T av = arow[p];
        const T* __restrict brow = b + p * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

struct ConvGeometry {
  std::int64_t c_in, h, w;
  std::int64_t kh, kw;
  std::int64_t stride, pad;
  std::int64_t out_h() const { return (h + 2 * pad - kh) / stride + 1; }
  std::int64_t out_w() const { return (w + 2 * pad - kw) / stride + 1; }
};

// cols[(c*kh + ki)*kw + kj][oy*ow + ox]
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const std::int64_t oh = g.out_h(), ow = g.out_w();
  for (std::int64_t c = 0; c < g.c_in; ++c)
    for (std::int64_t ki = 0; ki < g.kh; ++ki)
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        T* row = cols + ((c * g.kh + ki) * g.kw + kj) * oh * ow;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ki;
          for (std::int64_t ox = 0; ox < ow; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kj;
            row[oy * ow + ox] = (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w)
                                    ? x[(c * g.h + iy) * g.w + ix]
                                    : T(0);
          }
        }
      }
}

template <typename T>
void col2im_accumulate(const ConvGeometry& g, const T* cols, T* dx) {
  const std::int64_t oh = g.out_h(), ow = g.out_w();
  for (std::int64_t c = 0; c < g.c_in; ++c)
    for (std::int64_t ki = 0; ki < g.kh; ++ki)
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        const T* row = cols + ((c * g.kh + ki) * g.kw + kj) * oh * ow;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h) continue;
          for (std::int64_t ox = 0; ox < ow; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kj;
            if (ix < 0 || ix >= g.w) continue;
            dx[(c * g.h + iy) * g.w + ix] += row[oy * ow + ox];
          }
        }
      }
}

// One axis of a half-pixel-centred (align_corners=false) linear resampling.
struct LinearAxis {
  std::vector<std::int64_t> lo, hi;
  std::vector<double> frac;  // weight of hi; lo gets 1 - frac
};

inline LinearAxis linear_axis(std::int64_t in, std::int64_t out) {
  LinearAxis ax;
  ax.lo.resize(static_cast<std::size_t>(out));
  ax.hi.resize(static_cast<std::size_t>(out));
  ax.frac.resize(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto lo = static_cast<std::int64_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const std::int64_t hi = std::min(lo + 1, in - 1);
    ax.lo[i] = lo;
    ax.hi[i] = hi;
    ax.frac[i] = (hi == lo) ? 0.0 : src - static_cast<double>(lo);
  }
  return ax;
}

template <typename T>
void bilinear_forward(std::int64_t channels, std::int64_t in_h, std::int64_t in_w,
                      const LinearAxis& ay, const LinearAxis& ax, const T* x, T* y) {
  const auto out_h = static_cast<std::int64_t>(ay.lo.size());
  const auto out_w = static_cast<std::int64_t>(ax.lo.size());
  for (std::int64_t c = 0; c < channels; ++c) {
    const T* plane = x + c * in_h * in_w;
    T* dst = y + c * out_h * out_w;
    for (std::int64_t i = 0; i < out_h; ++i) {
      const T fy = static_cast<T>(ay.frac[i]);
      const T* r0 = plane + ay.lo[i] * in_w;
      const T* r1 = plane + ay.hi[i] * in_w;
      for (std::int64_t j = 0; j < out_w; ++j) {
        const T fx = static_cast<T>(ax.frac[j]);
        const T top = r0[ax.lo[j]] + fx * (r0[ax.hi[j]] - r0[ax.lo[j]]);
        const T bot = r1[ax.lo[j]] + fx * (r1[ax.hi[j]] - r1[ax.lo[j]]);
        dst[i * out_w + j] = top + fy * (bot - top);
      }
    }
  }
}

template <typename T>
void bilinear_backward(std::int64_t channels, std::int64_t in_h, std::int64_t in_w,
                       const LinearAxis& ay, const LinearAxis& ax, const T* dy, T* dx) {
  const auto out_h = static_cast<std::int64_t>(ay.lo.size());
  const auto out_w = static_cast<std::int64_t>(ax.lo.size());
  for (std::int64_t c = 0; c < channels; ++c) {
    T* plane = dx + c * in_h * in_w;
    const T* src = dy + c * out_h * out_w;
    for (std::int64_t i = 0; i < out_h; ++i) {
      const T fy = static_cast<T>(ay.frac[i]);
      T* r0 = plane + ay.lo[i] * in_w;
      T* r1 = plane + ay.hi[i] * in_w;
      for (std::int64_t j = 0; j < out_w; ++j) {
        const T fx = static_cast<T>(ax.frac[j]);
        const T g = src[i * out_w + j];
        const T gt = g * (T(1) - fy);
        const T gb = g * fy;
        r0[ax.lo[j]] += gt * (T(1) - fx);
        r0[ax.hi[j]] += gt * fx;
        r1[ax.lo[j]] += gb * (T(1) - fx);
        r1[ax.hi[j]] += gb * fx;
      }
    }
  }
}

}  // namespace geoadapt::kernels
