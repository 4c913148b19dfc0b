// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

// Temporal prompt generator. Frame token grids are concatenated into one
// sequence, passed through a residual self-attention layer, averaged back
// over frames, mean-pooled over tokens, and mapped by a GELU MLP to k prompt
// vectors. Also hosts the non-temporal prompt sources used as baselines.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "geoadapt/attention.hpp"
#include "geoadapt/encoder.hpp"
#include "geoadapt/model_config.hpp"
#include "geoadapt/ops.hpp"
#include "geoadapt/params.hpp"

namespace geoadapt {

inline const std::string kPromptPrefix = "tp_prompt";
inline const std::string kLearnedPrompts = "decoder/learned_prompts";

inline void init_temporal_prompt(ModelState& s, const PromptConfig& cfg, std::int64_t d, Rng& rng) {
  const double proj = 1.0 / std::sqrt(double(d));
  init_attention(s, kPromptPrefix + "/attn", d, rng, false, proj, 0.02);
  init::linear(s, kPromptPrefix + "/mlp1", d, 2 * d, proj, rng, false);
  init::linear(s, kPromptPrefix + "/mlp2", 2 * d, std::int64_t(cfg.k) * d,
               1.0 / std::sqrt(double(2 * d)), rng, false);
}

inline void init_learned_prompts(ModelState& s, int k, std::int64_t d, Rng& rng) {
  s.add(kLearnedPrompts, init::normal({k, d}, 1.0, rng), false);
}

inline std::int64_t temporal_prompt_param_count(int k, std::int64_t d) {
  return attention_param_count(d) + (d * 2 * d + 2 * d) + (2 * d * k * d + k * d);
}

inline std::int64_t temporal_prompt_flops(int k, std::int64_t d, std::int64_t tokens, int frames) {
  const std::int64_t n = tokens * frames;
  return flops::attention(n, n, d) + flops::matmul(1, d, 2 * d) + flops::matmul(1, 2 * d, k * d);
}

/// Self-attention over all frames' tokens, then the mean over frames.
template <typename T>
TokenGrid<T> temporal_encode(Binder<T>& p, const std::vector<TokenGrid<T>>& frames, int heads) {
  using namespace ops;
  if (frames.empty()) throw DimensionError("temporal_encode: empty frame stack");
  std::vector<Var<T>> seq;
  for (const auto& f : frames) {
    if (f.h != frames[0].h || f.w != frames[0].w || f.tokens.shape() != frames[0].tokens.shape()) {
      throw DimensionError("temporal_encode: frame grid " + shape_str(f.tokens.shape()) +
                           " differs from " + shape_str(frames[0].tokens.shape()));
    }
    seq.push_back(f.tokens);
  }
  Var<T> x = seq.size() == 1 ? seq[0] : concat(seq, 0);
  auto att = multi_head_attention(p, kPromptPrefix + "/attn", x, x, heads);
  Var<T> y = add(x, att.out);
  Var<T> pooled = group_mean(y, static_cast<std::int64_t>(frames.size()));
  return TokenGrid<T>{pooled, frames[0].h, frames[0].w};
}

/// P = MLP(mean over tokens of F_temp), reshaped to [k x d].
template <typename T>
Var<T> synthesize_prompts(Binder<T>& p, const TokenGrid<T>& temp, int k) {
  using namespace ops;
  if (k < 1) throw ConfigError("prompt count k must be >= 1");
  const std::int64_t d = temp.tokens.dim(1);
  const auto& w2 = p.params().value(kPromptPrefix + "/mlp2/w");
  if (w2.dim(1) != std::int64_t(k) * d) {
    throw ConfigError("prompt MLP emits " + std::to_string(w2.dim(1) / d) + " prompts, asked for " +
                      std::to_string(k));
  }
  Var<T> pooled = mean_rows(temp.tokens);
  Var<T> h = gelu(linear(pooled, p(kPromptPrefix + "/mlp1/w"), std::optional{p(kPromptPrefix + "/mlp1/b")}));
  Var<T> out = linear(h, p(kPromptPrefix + "/mlp2/w"), std::optional{p(kPromptPrefix + "/mlp2/b")});
  return reshape(out, Shape{k, d});
}

/// Point-style prompts: the native token under one pixel per prompt. Prompt j
/// targets class (j mod C); the pixel is drawn at random among that class's
/// pixels (any pixel if the class is absent).
template <typename T>
BasicTensor<T> point_prompts(const FeatureGrid<T>& grid, std::span<const int> labels,
                             std::int64_t height, std::int64_t width, int k, int classes,
                             std::uint64_t seed) {
  Rng rng(seed);
  const std::int64_t d = grid.tokens.dim(1);
  const std::int64_t cell_h = height / grid.h, cell_w = width / grid.w;
  BasicTensor<T> out(Shape{k, d});
  for (int j = 0; j < k; ++j) {
    const int cls = j % classes;
    std::vector<std::int64_t> pool;
    for (std::int64_t i = 0; i < height * width; ++i)
      if (labels[static_cast<std::size_t>(i)] == cls) pool.push_back(i);
    std::int64_t pix;
    if (pool.empty()) {
      pix = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(height * width)));
    } else {
      pix = pool[rng.below(pool.size())];
    }
    const std::int64_t tok = (pix / width / cell_h) * grid.w + (pix % width) / cell_w;
    for (std::int64_t c = 0; c < d; ++c) out[j * d + c] = grid.tokens[tok * d + c];
  }
  return out;
}

/// Box-style prompts: the mean token inside the bounding box of one class.
template <typename T>
BasicTensor<T> box_prompts(const FeatureGrid<T>& grid, std::span<const int> labels,
                           std::int64_t height, std::int64_t width, int k, int classes) {
  const std::int64_t d = grid.tokens.dim(1);
  const std::int64_t cell_h = height / grid.h, cell_w = width / grid.w;
  BasicTensor<T> out(Shape{k, d});
  for (int j = 0; j < k; ++j) {
    const int cls = j % classes;
    std::int64_t y0 = height, y1 = -1, x0 = width, x1 = -1;
    for (std::int64_t y = 0; y < height; ++y)
      for (std::int64_t x = 0; x < width; ++x)
        if (labels[static_cast<std::size_t>(y * width + x)] == cls) {
          y0 = std::min(y0, y);
          y1 = std::max(y1, y);
          x0 = std::min(x0, x);
          x1 = std::max(x1, x);
        }
    if (y1 < 0) {
      y0 = 0, y1 = height - 1, x0 = 0, x1 = width - 1;
    }
    const std::int64_t ty0 = y0 / cell_h, ty1 = y1 / cell_h, tx0 = x0 / cell_w, tx1 = x1 / cell_w;
    std::int64_t n = 0;
    for (std::int64_t ty = ty0; ty <= ty1; ++ty)
      for (std::int64_t tx = tx0; tx <= tx1; ++tx, ++n)
        for (std::int64_t c = 0; c < d; ++c) out[j * d + c] += grid.tokens[(ty * grid.w + tx) * d + c];
    for (std::int64_t c = 0; c < d; ++c) out[j * d + c] /= T(n);
  }
  return out;
}

}  // namespace geoadapt
