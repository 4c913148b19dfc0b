// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

// Terrain adapter: a small strided CNN turns the elevation raster into a
// token grid aligned with the image tokens, and a learned sigmoid gate mixes
// the two per token and per channel:
//
//   gate  = sigmoid([F_dem | F_img] W + b)
//   fused = gate * F_dem + (1 - gate) * F_img

#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "geoadapt/attention.hpp"
#include "geoadapt/encoder.hpp"
#include "geoadapt/model_config.hpp"
#include "geoadapt/ops.hpp"
#include "geoadapt/params.hpp"

namespace geoadapt {

inline const std::string kAdapterPrefix = "ta_adapter";

inline void init_terrain_adapter(ModelState& s, const AdapterConfig& cfg, std::int64_t d, Rng& rng) {
  std::int64_t c_in = 1;
  for (std::size_t l = 0; l < 3; ++l) {
    const std::int64_t c_out = cfg.channels[l];
    const std::string pre = kAdapterPrefix + "/dem_conv" + std::to_string(l);
    s.add(pre + "/w", init::normal({c_out, c_in, 3, 3}, std::sqrt(2.0 / double(9 * c_in)), rng),
          false);
    s.add(pre + "/b", init::constant({c_out}, 0.0f), false);
    c_in = c_out;
  }
  s.add(kAdapterPrefix + "/dem_proj/w", init::normal({d, c_in, 1, 1}, 1.0 / std::sqrt(double(c_in)), rng),
        false);
  s.add(kAdapterPrefix + "/dem_proj/b", init::constant({d}, 0.0f), false);
  init::linear(s, kAdapterPrefix + "/gate", 2 * d, d, 1.0 / std::sqrt(double(2 * d)), rng, false);
}

// The last layer's kernel and stride bring the total downsampling to `patch`.
inline std::int64_t dem_proj_stride(int patch) { return patch >= 8 ? patch / 8 : 1; }

inline std::int64_t terrain_adapter_param_count(const AdapterConfig& cfg, std::int64_t d, int patch) {
  std::int64_t n = 0, c_in = 1;
  for (int c : cfg.channels) {
    n += std::int64_t(c) * c_in * 9 + c;
    c_in = c;
  }
  const std::int64_t k = dem_proj_stride(patch);
  return n + d * c_in * k * k + d + (2 * d * d + d);
}

inline std::int64_t terrain_adapter_flops(const AdapterConfig& cfg, std::int64_t d, int patch,
                                          std::int64_t h, std::int64_t w) {
  std::int64_t total = 0, c_in = 1;
  for (int c : cfg.channels) {
    h = (h + 2 - 3) / 2 + 1;
    w = (w + 2 - 3) / 2 + 1;
    total += flops::conv(c_in, c, 3, 3, h, w);
    c_in = c;
  }
  const std::int64_t k = dem_proj_stride(patch);
  h = (h - k) / k + 1;
  w = (w - k) / k + 1;
  total += flops::conv(c_in, d, k, k, h, w);
  total += flops::matmul(h * w, 2 * d, d);
  return total;
}

/// Zero-mean, unit-variance normalisation of one elevation raster.
template <typename T>
BasicTensor<T> normalize_dem(const BasicTensor<T>& dem) {
  double mean = 0.0;
  for (T v : dem.values()) mean += double(v);
  mean /= double(dem.size());
  double var = 0.0;
  for (T v : dem.values()) var += (double(v) - mean) * (double(v) - mean);
  var /= double(dem.size());
  const double inv = 1.0 / std::sqrt(var + 1e-12);
  BasicTensor<T> out = dem;
  for (auto& v : out.values()) v = static_cast<T>((double(v) - mean) * inv);
  return out;
}

/// Encodes a (normalised) DEM [1 x H x W] into a token grid of width d.
template <typename T>
TokenGrid<T> encode_dem(Binder<T>& p, Var<T> dem, int patch, std::int64_t expect_h,
                        std::int64_t expect_w) {
  using namespace ops;
  if (dem.value().ndim() != 3 || dem.dim(0) != 1) {
    throw DimensionError("DEM must be 1 x H x W, got " + shape_str(dem.shape()));
  }
  Var<T> x = dem;
  for (int l = 0; l < 3; ++l) {
    const std::string pre = kAdapterPrefix + "/dem_conv" + std::to_string(l);
    x = relu(conv2d(x, p(pre + "/w"), std::optional{p(pre + "/b")}, 2, 1));
  }
  const std::int64_t k = dem_proj_stride(patch);
  const auto& pw = p.params().value(kAdapterPrefix + "/dem_proj/w");
  if (pw.dim(2) != k) {
    throw ConfigError("DEM projection kernel " + std::to_string(pw.dim(2)) +
                      " does not match patch size " + std::to_string(patch));
  }
  x = conv2d(x, p(kAdapterPrefix + "/dem_proj/w"), std::optional{p(kAdapterPrefix + "/dem_proj/b")},
             k, 0);
  if (x.dim(1) != expect_h || x.dim(2) != expect_w) {
    throw ConfigError("DEM encoder produced a " + std::to_string(x.dim(1)) + "x" +
                      std::to_string(x.dim(2)) + " grid, image grid is " +
                      std::to_string(expect_h) + "x" + std::to_string(expect_w) +
                      " (check stride/padding against patch size)");
  }
  return TokenGrid<T>{map_to_tokens(x), x.dim(1), x.dim(2)};
}

/// Gated convex mix of DEM and image tokens. When `gate_out` is given it
/// receives the per-token, per-channel gate.
template <typename T>
TokenGrid<T> gated_fuse(Binder<T>& p, const TokenGrid<T>& dem, const TokenGrid<T>& img,
                        Var<T>* gate_out = nullptr) {
  using namespace ops;
  if (dem.h != img.h || dem.w != img.w || dem.tokens.shape() != img.tokens.shape()) {
    throw DimensionError("gated_fuse: DEM grid " + shape_str(dem.tokens.shape()) +
                         " does not match image grid " + shape_str(img.tokens.shape()));
  }
  Var<T> both = concat(std::vector<Var<T>>{dem.tokens, img.tokens}, 1);
  Var<T> gate = sigmoid(linear(both, p(kAdapterPrefix + "/gate/w"),
                               std::optional{p(kAdapterPrefix + "/gate/b")}));
  if (gate_out) *gate_out = gate;
  Var<T> fused = add(mul(gate, dem.tokens), mul(rsub_scalar(T(1), gate), img.tokens));
  return TokenGrid<T>{fused, img.h, img.w};
}

}  // namespace geoadapt
