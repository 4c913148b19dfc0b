// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

// Stand-in for the frozen foundation-model image encoder: patch embedding,
// a learned positional table, and pre-norm transformer blocks. Weights come
// from a fixed seed and are registered as frozen.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "geoadapt/attention.hpp"
#include "geoadapt/model_config.hpp"
#include "geoadapt/ops.hpp"
#include "geoadapt/params.hpp"

namespace geoadapt {

/// Token grid on a tape: tokens is [h*w x d].
template <typename T>
struct TokenGrid {
  Var<T> tokens;
  std::int64_t h = 0;
  std::int64_t w = 0;
};

/// Materialised token grid (used for caching frozen encoder output).
template <typename T>
struct FeatureGrid {
  BasicTensor<T> tokens;
  std::int64_t h = 0;
  std::int64_t w = 0;
};

inline const std::string kEncoderPrefix = "frozen/encoder";

inline void init_encoder(ModelState& s, const EncoderConfig& cfg) {
  Rng rng(cfg.seed);
  const std::int64_t d = cfg.dim, p = cfg.patch;
  const std::int64_t fan_in = 3 * p * p;
  const std::int64_t hidden = static_cast<std::int64_t>(cfg.mlp_ratio) * d;
  s.add(kEncoderPrefix + "/patch_embed/w",
        init::normal({d, 3, p, p}, 1.0 / std::sqrt(double(fan_in)), rng), true);
  s.add(kEncoderPrefix + "/patch_embed/b", init::constant({d}, 0.0f), true);
  s.add(kEncoderPrefix + "/pos_embed", init::normal({d, cfg.grid_h(), cfg.grid_w()}, 0.1, rng),
        true);
  const double proj = 1.0 / std::sqrt(double(d));
  const double out = proj / std::sqrt(2.0 * cfg.depth);
  for (int b = 0; b < cfg.depth; ++b) {
    init_transformer_block(s, kEncoderPrefix + "/block" + std::to_string(b), d, hidden, rng, true,
                           proj, out);
  }
}

inline std::int64_t encoder_param_count(const EncoderConfig& cfg) {
  const std::int64_t d = cfg.dim, p = cfg.patch;
  return d * 3 * p * p + d + d * cfg.grid_h() * cfg.grid_w() +
         cfg.depth * transformer_block_param_count(d, std::int64_t(cfg.mlp_ratio) * d);
}

inline std::int64_t encoder_flops(const EncoderConfig& cfg, std::int64_t h, std::int64_t w) {
  const std::int64_t gh = h / cfg.patch, gw = w / cfg.patch, n = gh * gw;
  const std::int64_t d = cfg.dim;
  return flops::conv(3, d, cfg.patch, cfg.patch, gh, gw) +
         cfg.depth * flops::transformer_block(n, d, std::int64_t(cfg.mlp_ratio) * d);
}

// Fixed per-channel pixel normalisation applied before patch embedding.
template <typename T>
BasicTensor<T> normalize_pixels(const BasicTensor<T>& image) {
  BasicTensor<T> out = image;
  for (auto& v : out.values()) v = (v - T(0.5)) / T(0.25);
  return out;
}

/// Encodes an image [3 x H x W] into a token grid (H/patch x W/patch).
template <typename T>
TokenGrid<T> encode(Binder<T>& p, const EncoderConfig& cfg, const BasicTensor<T>& image) {
  using namespace ops;
  if (image.ndim() != 3 || image.dim(0) != 3) {
    throw DimensionError("encoder expects a 3 x H x W image, got " + shape_str(image.shape()));
  }
  const std::int64_t h = image.dim(1), w = image.dim(2);
  if (h % cfg.patch != 0 || w % cfg.patch != 0) {
    throw ConfigError("image extents " + std::to_string(h) + "x" + std::to_string(w) +
                      " not divisible by patch size " + std::to_string(cfg.patch));
  }
  const std::int64_t gh = h / cfg.patch, gw = w / cfg.patch;
  Var<T> x = p.tape().constant(normalize_pixels(image));
  Var<T> emb = conv2d(x, p(kEncoderPrefix + "/patch_embed/w"),
                      std::optional{p(kEncoderPrefix + "/patch_embed/b")}, cfg.patch, 0);
  Var<T> pos = bilinear_resize(p(kEncoderPrefix + "/pos_embed"), gh, gw);
  Var<T> tokens = map_to_tokens(add(emb, pos));
  for (int b = 0; b < cfg.depth; ++b) {
    tokens = transformer_block(p, kEncoderPrefix + "/block" + std::to_string(b), tokens, cfg.heads);
  }
  return TokenGrid<T>{tokens, gh, gw};
}

/// Runs the encoder outside any training graph and returns plain values.
template <typename T>
FeatureGrid<T> encode_values(const ParameterSet<T>& params, const EncoderConfig& cfg,
                             const BasicTensor<T>& image) {
  Tape<T> tape;
  Binder<T> binder(tape, params);
  binder.set_inference(true);
  TokenGrid<T> g = encode(binder, cfg, image);
  return FeatureGrid<T>{g.tokens.value(), g.h, g.w};
}

}  // namespace geoadapt
