// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "geoadapt/attention.hpp"
#include "geoadapt/encoder.hpp"
#include "geoadapt/model_config.hpp"
#include "geoadapt/ops.hpp"
#include "geoadapt/params.hpp"

namespace geoadapt {

inline const std::string kDecoderPrefix = "decoder";

inline void init_mask_decoder(ModelState& s, const DecoderConfig& cfg, std::int64_t d, Rng& rng) {
  const double proj = 1.0 / std::sqrt(double(d));
  const double out = proj / std::sqrt(2.0 * cfg.depth);
  const std::int64_t hidden = std::int64_t(cfg.mlp_ratio) * d;
  for (int b = 0; b < cfg.depth; ++b) {
    init_transformer_block(s, kDecoderPrefix + "/block" + std::to_string(b), d, hidden, rng, false,
                           proj, out);
  }
  init::layer_norm(s, kDecoderPrefix + "/ln_out", d, false);
  init::linear(s, kDecoderPrefix + "/head", d, cfg.classes, proj, rng, false);
}

inline std::int64_t mask_decoder_param_count(const DecoderConfig& cfg, std::int64_t d) {
  return cfg.depth * transformer_block_param_count(d, std::int64_t(cfg.mlp_ratio) * d) + 2 * d +
         (d * cfg.classes + cfg.classes);
}

inline std::int64_t mask_decoder_flops(const DecoderConfig& cfg, std::int64_t d, std::int64_t tokens,
                                       int prompts) {
  const std::int64_t n = tokens + prompts;
  return cfg.depth * flops::transformer_block(n, d, std::int64_t(cfg.mlp_ratio) * d) +
         flops::matmul(tokens, d, cfg.classes);
}

template <typename T>
struct DecoderTrace {
  // Attention of the last block, one [n x n] matrix per head, where the first
  // grid-size rows/columns are image tokens and the rest prompts.
  std::vector<Var<T>> attention;
};

/// Decodes fused tokens plus prompts into logits [C x out_h x out_w].
/// Prompts join the attention sequence but their outputs are discarded.
template <typename T>
Var<T> decode(Binder<T>& p, const DecoderConfig& cfg, const TokenGrid<T>& fused,
              std::optional<Var<T>> prompts, std::int64_t out_h, std::int64_t out_w,
              DecoderTrace<T>* trace = nullptr) {
  using namespace ops;
  const std::int64_t n = fused.h * fused.w;
  const std::int64_t d = fused.tokens.dim(1);
  Var<T> seq = fused.tokens;
  if (prompts) {
    if (prompts->value().ndim() != 2 || prompts->dim(1) != d) {
      throw DimensionError("decoder: prompt shape " + shape_str(prompts->shape()) +
                           " incompatible with token width " + std::to_string(d));
    }
    seq = concat(std::vector<Var<T>>{fused.tokens, *prompts}, 0);
  }
  for (int b = 0; b < cfg.depth; ++b) {
    std::vector<Var<T>>* att = (trace && b == cfg.depth - 1) ? &trace->attention : nullptr;
    seq = transformer_block(p, kDecoderPrefix + "/block" + std::to_string(b), seq, cfg.heads, att);
  }
  Var<T> tokens = prompts ? slice(seq, 0, 0, n) : seq;
  tokens = layer_norm(tokens, p(kDecoderPrefix + "/ln_out/g"), p(kDecoderPrefix + "/ln_out/b"));
  Var<T> logits = linear(tokens, p(kDecoderPrefix + "/head/w"), std::optional{p(kDecoderPrefix + "/head/b")});
  return bilinear_resize(tokens_to_map(logits, fused.h, fused.w), out_h, out_w);
}

/// Per-pixel argmax over classes of logits [C x H x W].
template <typename T>
std::vector<int> argmax_labels(const BasicTensor<T>& logits) {
  const std::int64_t c = logits.dim(0), n = logits.dim(1) * logits.dim(2);
  std::vector<int> out(static_cast<std::size_t>(n), 0);
  for (std::int64_t i = 0; i < n; ++i) {
    T best = logits[i];
    for (std::int64_t k = 1; k < c; ++k)
      if (logits[k * n + i] > best) {
        best = logits[k * n + i];
        out[static_cast<std::size_t>(i)] = static_cast<int>(k);
      }
  }
  return out;
}

}  // namespace geoadapt
