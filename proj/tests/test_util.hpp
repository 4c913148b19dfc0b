// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

// Shared helpers for the unit tests: random tensors and straight-line
// reference implementations written independently of the library kernels.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "geoadapt/geoadapt.hpp"

namespace geoadapt::test {

// Row-major dense matrix in double for the reference code.
struct Mat {
  std::int64_t rows = 0, cols = 0;
  std::vector<double> v;
  Mat() = default;
  Mat(std::int64_t r, std::int64_t c) : rows(r), cols(c), v(static_cast<std::size_t>(r * c), 0.0) {}
  double& operator()(std::int64_t i, std::int64_t j) { return v[static_cast<std::size_t>(i * cols + j)]; }
  double operator()(std::int64_t i, std::int64_t j) const { return v[static_cast<std::size_t>(i * cols + j)]; }
};

template <typename T>
Mat to_mat(const BasicTensor<T>& t) {
  const std::int64_t r = t.ndim() == 1 ? 1 : t.dim(0);
  Mat m(r, t.size() / r);
  for (std::int64_t i = 0; i < t.size(); ++i) m.v[static_cast<std::size_t>(i)] = double(t[i]);
  return m;
}

inline Mat ref_matmul(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.cols);
  for (std::int64_t i = 0; i < a.rows; ++i)
    for (std::int64_t j = 0; j < b.cols; ++j) {
      double s = 0;
      for (std::int64_t k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline Mat ref_add_row(Mat a, const Mat& bias) {
  for (std::int64_t i = 0; i < a.rows; ++i)
    for (std::int64_t j = 0; j < a.cols; ++j) a(i, j) += bias.v[static_cast<std::size_t>(j)];
  return a;
}

inline Mat ref_add(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
  return a;
}

inline Mat ref_slice_cols(const Mat& a, std::int64_t c0, std::int64_t n) {
  Mat out(a.rows, n);
  for (std::int64_t i = 0; i < a.rows; ++i)
    for (std::int64_t j = 0; j < n; ++j) out(i, j) = a(i, c0 + j);
  return out;
}

inline Mat ref_softmax_rows(Mat a) {
  for (std::int64_t i = 0; i < a.rows; ++i) {
    double mx = -1e300, s = 0;
    for (std::int64_t j = 0; j < a.cols; ++j) mx = std::max(mx, a(i, j));
    for (std::int64_t j = 0; j < a.cols; ++j) s += (a(i, j) = std::exp(a(i, j) - mx));
    for (std::int64_t j = 0; j < a.cols; ++j) a(i, j) /= s;
  }
  return a;
}

inline Mat ref_gelu(Mat a) {
  for (auto& x : a.v) x = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
  return a;
}

inline Mat ref_layer_norm(Mat a, const Mat& g, const Mat& b, double eps = 1e-5) {
  for (std::int64_t i = 0; i < a.rows; ++i) {
    double m = 0, var = 0;
    for (std::int64_t j = 0; j < a.cols; ++j) m += a(i, j);
    m /= double(a.cols);
    for (std::int64_t j = 0; j < a.cols; ++j) var += (a(i, j) - m) * (a(i, j) - m);
    var /= double(a.cols);
    for (std::int64_t j = 0; j < a.cols; ++j)
      a(i, j) = (a(i, j) - m) / std::sqrt(var + eps) * g.v[std::size_t(j)] + b.v[std::size_t(j)];
  }
  return a;
}

// Multi-head attention written out step by step from named parameters.
template <typename T>
Mat ref_attention(const ParameterSet<T>& s, const std::string& prefix, const Mat& q_in, const Mat& kv_in,
                  int heads, std::vector<Mat>* weights = nullptr) {
  const Mat q = ref_add_row(ref_matmul(q_in, to_mat(s.value(prefix + "/q/w"))), to_mat(s.value(prefix + "/q/b")));
  const Mat k = ref_matmul(kv_in, to_mat(s.value(prefix + "/k/w")));
  const Mat v = ref_add_row(ref_matmul(kv_in, to_mat(s.value(prefix + "/v/w"))), to_mat(s.value(prefix + "/v/b")));
  const std::int64_t d = q.cols, dh = d / heads;
  Mat merged(q.rows, d);
  for (int h = 0; h < heads; ++h) {
    Mat scores(q.rows, k.rows);
    for (std::int64_t i = 0; i < q.rows; ++i)
      for (std::int64_t j = 0; j < k.rows; ++j) {
        double acc = 0;
        for (std::int64_t c = 0; c < dh; ++c) acc += q(i, h * dh + c) * k(j, h * dh + c);
        scores(i, j) = acc / std::sqrt(double(dh));
      }
    const Mat a = ref_softmax_rows(scores);
    if (weights) weights->push_back(a);
    for (std::int64_t i = 0; i < q.rows; ++i)
      for (std::int64_t c = 0; c < dh; ++c) {
        double acc = 0;
        for (std::int64_t j = 0; j < k.rows; ++j) acc += a(i, j) * v(j, h * dh + c);
        merged(i, h * dh + c) = acc;
      }
  }
  return ref_add_row(ref_matmul(merged, to_mat(s.value(prefix + "/o/w"))), to_mat(s.value(prefix + "/o/b")));
}

// Naive cross-correlation of x[ci x H x W] with w[co x ci x kh x kw].
inline std::vector<double> ref_conv(const std::vector<double>& x, std::int64_t ci, std::int64_t h, std::int64_t w,
                                    const std::vector<double>& k, std::int64_t co, std::int64_t kh,
                                    std::int64_t kw, const std::vector<double>& bias, std::int64_t stride,
                                    std::int64_t pad, std::int64_t* oh_out = nullptr,
                                    std::int64_t* ow_out = nullptr) {
  const std::int64_t oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> y(static_cast<std::size_t>(co * oh * ow), 0.0);
  for (std::int64_t o = 0; o < co; ++o)
    for (std::int64_t i = 0; i < oh; ++i)
      for (std::int64_t j = 0; j < ow; ++j) {
        double acc = bias.empty() ? 0.0 : bias[std::size_t(o)];
        for (std::int64_t c = 0; c < ci; ++c)
          for (std::int64_t a = 0; a < kh; ++a)
            for (std::int64_t b = 0; b < kw; ++b) {
              const std::int64_t yy = i * stride + a - pad, xx = j * stride + b - pad;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              acc += x[std::size_t((c * h + yy) * w + xx)] * k[std::size_t(((o * ci + c) * kh + a) * kw + b)];
            }
        y[std::size_t((o * oh + i) * ow + j)] = acc;
      }
  if (oh_out) *oh_out = oh;
  if (ow_out) *ow_out = ow;
  return y;
}

template <typename T>
std::vector<double> to_vec(const BasicTensor<T>& t) {
  return std::vector<double>(t.values().begin(), t.values().end());
}

inline Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(s));
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
BasicTensor<T> random_tensor_t(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(std::move(s));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : 1e300;
}

// A scratch directory under the build tree, emptied on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
#ifdef GEOADAPT_TEST_TMP
  const std::filesystem::path root = GEOADAPT_TEST_TMP;
#else
  const std::filesystem::path root = std::filesystem::temp_directory_path() / "geoadapt_tests";
#endif
  const auto p = root / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Concatenated bytes of every regular file under `dir`, ordered by relative path.
inline std::string tree_fingerprint(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(std::filesystem::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) {
    const auto bytes = io::read_file(dir / f);
    out += f.string() + '\0' + std::string(bytes.begin(), bytes.end()) + '\0';
  }
  return out;
}

// Small model configuration for fast tests (32x32 inputs, shallow encoder).
inline ModelConfig small_config() {
  ModelConfig c;
  c.encoder.image_h = 32;
  c.encoder.image_w = 32;
  c.encoder.depth = 2;
  return c;
}

inline GenConfig small_gen(std::uint64_t seed = 0) {
  GenConfig g;
  g.height = g.width = 32;
  g.seed = seed;
  return g;
}

}  // namespace geoadapt::test
