// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

// Multi-head attention and pre-norm transformer blocks shared by the encoder,
// the temporal prompt generator, the scale fusion, and the decoder.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "geoadapt/ops.hpp"
#include "geoadapt/params.hpp"

namespace geoadapt {

namespace flops {

inline std::int64_t matmul(std::int64_t m, std::int64_t k, std::int64_t n) { return 2 * m * k * n; }

inline std::int64_t conv(std::int64_t c_in, std::int64_t c_out, std::int64_t kh, std::int64_t kw,
                         std::int64_t out_h, std::int64_t out_w) {
  return 2 * c_in * c_out * kh * kw * out_h * out_w;
}

// Projections for q (nq rows), k and v (nk rows), and the output, plus the
// score and weighted-sum products.
inline std::int64_t attention(std::int64_t nq, std::int64_t nk, std::int64_t d) {
  return matmul(nq, d, d) + 2 * matmul(nk, d, d) + matmul(nq, d, d) + matmul(nq, d, nk) +
         matmul(nq, nk, d);
}

inline std::int64_t transformer_block(std::int64_t n, std::int64_t d, std::int64_t hidden) {
  return attention(n, n, d) + matmul(n, d, hidden) + matmul(n, hidden, d);
}

}  // namespace flops

template <typename T>
struct AttentionResult {
  Var<T> out;
  std::vector<Var<T>> weights;  // one [nq x nk] row-stochastic matrix per head
};

inline void init_attention(ModelState& s, const std::string& prefix, std::int64_t d, Rng& rng,
                           bool frozen, double proj_std, double out_std) {
  init::linear(s, prefix + "/q", d, d, proj_std, rng, frozen);
  // Keys carry no bias: softmax cancels a per-query constant, so a key bias
  // would never receive a gradient.
  s.add(prefix + "/k/w", init::normal({d, d}, proj_std, rng), frozen);
  init::linear(s, prefix + "/v", d, d, proj_std, rng, frozen);
  init::linear(s, prefix + "/o", d, d, out_std, rng, frozen);
}

inline std::int64_t attention_param_count(std::int64_t d) { return 4 * d * d + 3 * d; }

/// Scaled dot-product attention with queries from `q_in` and keys/values from
/// `kv_in` (both [n x d]); `heads` must divide d.
template <typename T>
AttentionResult<T> multi_head_attention(Binder<T>& p, const std::string& prefix, Var<T> q_in,
                                        Var<T> kv_in, int heads) {
  using namespace ops;
  const std::int64_t d = q_in.dim(1);
  if (heads < 1 || d % heads != 0) {
    throw ConfigError("attention width " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (kv_in.dim(1) != d) {
    throw DimensionError("attention: query width " + std::to_string(d) + " vs key width " +
                         std::to_string(kv_in.dim(1)));
  }
  const std::int64_t dh = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(T(dh));
  Var<T> q = linear(q_in, p(prefix + "/q/w"), std::optional{p(prefix + "/q/b")});
  Var<T> k = matmul(kv_in, p(prefix + "/k/w"));
  Var<T> v = linear(kv_in, p(prefix + "/v/w"), std::optional{p(prefix + "/v/b")});
  AttentionResult<T> res;
  std::vector<Var<T>> head_out;
  for (int h = 0; h < heads; ++h) {
    Var<T> qh = heads == 1 ? q : slice(q, 1, h * dh, dh);
    Var<T> kh = heads == 1 ? k : slice(k, 1, h * dh, dh);
    Var<T> vh = heads == 1 ? v : slice(v, 1, h * dh, dh);
    Var<T> a = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt));
    res.weights.push_back(a);
    head_out.push_back(matmul(a, vh));
  }
  Var<T> merged = heads == 1 ? head_out[0] : concat(head_out, 1);
  res.out = linear(merged, p(prefix + "/o/w"), std::optional{p(prefix + "/o/b")});
  return res;
}

inline void init_transformer_block(ModelState& s, const std::string& prefix, std::int64_t d,
                                   std::int64_t hidden, Rng& rng, bool frozen, double proj_std,
                                   double out_std) {
  init::layer_norm(s, prefix + "/ln1", d, frozen);
  init_attention(s, prefix + "/attn", d, rng, frozen, proj_std, out_std);
  init::layer_norm(s, prefix + "/ln2", d, frozen);
  init::linear(s, prefix + "/fc1", d, hidden, proj_std, rng, frozen);
  init::linear(s, prefix + "/fc2", hidden, d, out_std * std::sqrt(double(d) / double(hidden)),
               rng, frozen);
}

inline std::int64_t transformer_block_param_count(std::int64_t d, std::int64_t hidden) {
  return 4 * d + attention_param_count(d) + (d * hidden + hidden) + (hidden * d + d);
}

/// Pre-norm block: x + Attn(LN(x)), then + MLP(LN(.)) with a GELU hidden layer.
template <typename T>
Var<T> transformer_block(Binder<T>& p, const std::string& prefix, Var<T> x, int heads,
                         std::vector<Var<T>>* attention_weights = nullptr) {
  using namespace ops;
  Var<T> h = layer_norm(x, p(prefix + "/ln1/g"), p(prefix + "/ln1/b"));
  auto att = multi_head_attention(p, prefix + "/attn", h, h, heads);
  if (attention_weights) *attention_weights = att.weights;
  x = add(x, att.out);
  h = layer_norm(x, p(prefix + "/ln2/g"), p(prefix + "/ln2/b"));
  h = gelu(linear(h, p(prefix + "/fc1/w"), std::optional{p(prefix + "/fc1/b")}));
  h = linear(h, p(prefix + "/fc2/w"), std::optional{p(prefix + "/fc2/b")});
  return add(x, h);
}

}  // namespace geoadapt
