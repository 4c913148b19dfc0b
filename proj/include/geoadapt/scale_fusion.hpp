// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

// Cross-scale fusion: native-scale tokens query the tokens of every scale.
// Non-native grids are bilinearly resampled onto the native grid before
// their tokens are stacked into the key/value sequence. The attention output
// is added back onto the native tokens.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "geoadapt/attention.hpp"
#include "geoadapt/encoder.hpp"
#include "geoadapt/ops.hpp"
#include "geoadapt/params.hpp"

namespace geoadapt {

inline const std::string kFusionPrefix = "ms_fusion";

inline void init_scale_fusion(ModelState& s, std::int64_t d, Rng& rng) {
  init_attention(s, kFusionPrefix + "/attn", d, rng, false, 1.0 / std::sqrt(double(d)), 0.02);
}

inline std::int64_t scale_fusion_param_count(std::int64_t d) { return attention_param_count(d); }

inline std::int64_t scale_fusion_flops(std::int64_t d, std::int64_t native_tokens, std::size_t scales) {
  return flops::attention(native_tokens, native_tokens * static_cast<std::int64_t>(scales), d);
}

// Resamples a token grid onto a target grid through its [d x h x w] map.
template <typename T>
Var<T> resample_tokens(const TokenGrid<T>& g, std::int64_t h, std::int64_t w) {
  using namespace ops;
  if (g.h == h && g.w == w) return g.tokens;
  return map_to_tokens(bilinear_resize(tokens_to_map(g.tokens, g.h, g.w), h, w));
}

/// Fuses per-scale grids; `native` indexes the grid that provides queries and
/// fixes the output grid. `weights_out`, when given, receives the per-head
/// attention matrices.
template <typename T>
TokenGrid<T> cross_scale_fuse(Binder<T>& p, const std::vector<TokenGrid<T>>& grids, int native,
                              int heads, std::vector<Var<T>>* weights_out = nullptr) {
  using namespace ops;
  if (native < 0 || native >= static_cast<int>(grids.size())) {
    throw ContractError("cross_scale_fuse: native grid missing from the scale set");
  }
  const TokenGrid<T>& base = grids[static_cast<std::size_t>(native)];
  std::vector<Var<T>> keys;
  for (const auto& g : grids) {
    if (g.tokens.dim(1) != base.tokens.dim(1)) {
      throw DimensionError("cross_scale_fuse: channel width " + std::to_string(g.tokens.dim(1)) +
                           " vs native " + std::to_string(base.tokens.dim(1)));
    }
    keys.push_back(resample_tokens(g, base.h, base.w));
  }
  Var<T> kv = keys.size() == 1 ? keys[0] : concat(keys, 0);
  auto att = multi_head_attention(p, kFusionPrefix + "/attn", base.tokens, kv, heads);
  if (weights_out) *weights_out = att.weights;
  return TokenGrid<T>{add(base.tokens, att.out), base.h, base.w};
}

}  // namespace geoadapt
