// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "geoadapt/errors.hpp"

namespace geoadapt {

enum class PromptStrategy { kTemporal, kLearned, kPoint, kBox };

inline std::string to_string(PromptStrategy s) {
  switch (s) {
    case PromptStrategy::kTemporal: return "temporal";
    case PromptStrategy::kLearned: return "learned";
    case PromptStrategy::kPoint: return "point";
    case PromptStrategy::kBox: return "box";
  }
  return "temporal";
}

inline PromptStrategy parse_prompt_strategy(const std::string& s) {
  if (s == "temporal") return PromptStrategy::kTemporal;
  if (s == "learned") return PromptStrategy::kLearned;
  if (s == "point") return PromptStrategy::kPoint;
  if (s == "box") return PromptStrategy::kBox;
  throw ConfigError("unknown prompt strategy '" + s + "' (expected temporal|learned|point|box)");
}

struct EncoderConfig {
  int patch = 8;
  int depth = 24;
  int dim = 64;
  int heads = 4;
  int mlp_ratio = 4;
  // Native input extents; the positional table is stored at this grid and
  // resampled for other scales.
  int image_h = 64;
  int image_w = 64;
  // The backbone seed is independent of the training seed: every run sees
  // the same "pretrained" weights.
  std::uint64_t seed = 0x5eedba5eULL;

  int grid_h() const { return image_h / patch; }
  int grid_w() const { return image_w / patch; }
};

struct AdapterConfig {
  bool enabled = true;
  std::vector<int> channels{4, 8, 16};
};

struct PromptConfig {
  bool enabled = true;
  PromptStrategy strategy = PromptStrategy::kTemporal;
  int k = 4;
  int frames = 3;
  int heads = 4;
};

struct FusionConfig {
  bool enabled = true;
  std::vector<double> scales{0.5, 1.0, 2.0};
  int heads = 1;
};

struct DecoderConfig {
  int depth = 2;
  int heads = 4;
  int mlp_ratio = 2;
  int classes = 4;
};

struct ModelConfig {
  EncoderConfig encoder;
  AdapterConfig adapter;
  PromptConfig prompt;
  FusionConfig fusion;
  DecoderConfig decoder;

  // Scale factors actually encoded: the full set with fusion, else native only.
  std::vector<double> active_scales() const {
    return fusion.enabled ? fusion.scales : std::vector<double>{1.0};
  }

  // Prompt strategy after applying the temporal toggle.
  PromptStrategy effective_strategy() const {
    if (!prompt.enabled && prompt.strategy == PromptStrategy::kTemporal) {
      return PromptStrategy::kLearned;
    }
    return prompt.strategy;
  }

  bool uses_temporal() const { return effective_strategy() == PromptStrategy::kTemporal; }
};

inline int native_scale_index(const std::vector<double>& scales) {
  int native = -1;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (scales[i] == 1.0) {
      if (native >= 0) throw ConfigError("scale set lists the native factor 1.0 twice");
      native = static_cast<int>(i);
    }
  }
  if (native < 0) throw ConfigError("scale set must contain the native factor 1.0");
  return native;
}

inline int scaled_extent(int extent, double factor) {
  return static_cast<int>(std::lround(extent * factor));
}

inline void validate(const ModelConfig& cfg) {
  const auto& e = cfg.encoder;
  if (e.patch < 1 || e.depth < 1 || e.dim < 1 || e.heads < 1 || e.mlp_ratio < 1)
    throw ConfigError("encoder extents must be positive");
  if (e.dim % e.heads != 0)
    throw ConfigError("encoder dim " + std::to_string(e.dim) + " not divisible by heads " +
                      std::to_string(e.heads));
  if (e.image_h % e.patch != 0 || e.image_w % e.patch != 0)
    throw ConfigError("image extents " + std::to_string(e.image_h) + "x" +
                      std::to_string(e.image_w) + " not divisible by patch size " +
                      std::to_string(e.patch));
  if (cfg.adapter.channels.size() != 3)
    throw ConfigError("terrain adapter needs exactly 3 conv channel widths");
  if (cfg.prompt.k < 1) throw ConfigError("prompt count k must be >= 1");
  if (cfg.prompt.frames < 1) throw ConfigError("temporal window T must be >= 1");
  if (e.dim % cfg.prompt.heads != 0) throw ConfigError("prompt attention heads must divide dim");
  if (e.dim % cfg.fusion.heads != 0) throw ConfigError("fusion heads must divide dim");
  if (e.dim % cfg.decoder.heads != 0) throw ConfigError("decoder heads must divide dim");
  if (cfg.decoder.classes < 2) throw ConfigError("decoder needs at least 2 classes");
  if (cfg.fusion.enabled) {
    native_scale_index(cfg.fusion.scales);
    for (double f : cfg.fusion.scales) {
      if (!(f > 0.0)) throw ConfigError("scale factors must be positive");
      const double h = e.image_h * f, w = e.image_w * f;
      const bool integral = std::abs(h - std::round(h)) < 1e-9 && std::abs(w - std::round(w)) < 1e-9;
      if (!integral || scaled_extent(e.image_h, f) % e.patch != 0 ||
          scaled_extent(e.image_w, f) % e.patch != 0) {
        throw ConfigError("scale factor " + std::to_string(f) + " gives extents " +
                          std::to_string(h) + "x" + std::to_string(w) +
                          " not divisible by patch size " + std::to_string(e.patch));
      }
    }
  }
}

}  // namespace geoadapt
