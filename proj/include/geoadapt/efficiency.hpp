// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

// Parameter, FLOP and latency accounting per module.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "geoadapt/model.hpp"

namespace geoadapt {

struct ModuleCost {
  std::string module;
  bool frozen = false;
  std::int64_t params = 0;
  std::int64_t flops = 0;
  double ms = 0.0;  // per image; 0 when timing was not requested
};

struct EfficiencyReport {
  std::vector<ModuleCost> modules;
  bool timed = false;

  std::int64_t total_params() const {
    std::int64_t n = 0;
    for (const auto& m : modules) n += m.params;
    return n;
  }
  std::int64_t frozen_params() const {
    std::int64_t n = 0;
    for (const auto& m : modules) n += m.frozen ? m.params : 0;
    return n;
  }
  std::int64_t trainable_params() const { return total_params() - frozen_params(); }
  std::int64_t total_flops() const {
    std::int64_t n = 0;
    for (const auto& m : modules) n += m.flops;
    return n;
  }
  double total_ms() const {
    double t = 0.0;
    for (const auto& m : modules) t += m.ms;
    return t;
  }
  const ModuleCost& at(const std::string& name) const {
    for (const auto& m : modules)
      if (m.module == name) return m;
    throw ConfigError("no module '" + name + "' in the efficiency report");
  }
};

/// Report rows, in order. Learned prompts live under "decoder/".
inline std::vector<std::string> efficiency_modules() {
  return {"encoder", "ta_adapter", "tp_prompt", "ms_fusion", "decoder"};
}

/// Exact parameter counts grouped by name prefix of a constructed state.
inline std::vector<ModuleCost> count_params(const ModelState& s) {
  std::vector<ModuleCost> out;
  for (const auto& m : efficiency_modules()) {
    const std::string prefix = m == "encoder" ? std::string(kEncoderPrefix) + "/" : m + "/";
    out.push_back({m, m == "encoder", s.count_prefix(prefix), 0, 0.0});
  }
  return out;
}

/// Analytic FLOPs per image for each module of `cfg`.
inline std::vector<std::int64_t> count_flops(const ModelConfig& cfg) {
  const auto& e = cfg.encoder;
  const std::int64_t d = e.dim;
  const auto scales = cfg.active_scales();
  const std::int64_t gh = e.grid_h(), gw = e.grid_w(), tokens = gh * gw;
  std::int64_t enc = 0, ta = 0, tp = 0, ms = 0, dec = 0;
  for (double f : scales) {
    const int h = scaled_extent(e.image_h, f), w = scaled_extent(e.image_w, f);
    enc += encoder_flops(e, h, w);
    if (cfg.adapter.enabled) ta += terrain_adapter_flops(cfg.adapter, d, e.patch, h, w);
  }
  if (cfg.uses_temporal()) {
    // Every frame but the latest needs its own pass; the latest is the image.
    enc += std::int64_t(cfg.prompt.frames - 1) * encoder_flops(e, e.image_h, e.image_w);
    tp = temporal_prompt_flops(cfg.prompt.k, d, tokens, cfg.prompt.frames);
  }
  if (cfg.fusion.enabled) ms = scale_fusion_flops(d, tokens, scales.size());
  dec = mask_decoder_flops(cfg.decoder, d, tokens, cfg.prompt.k);
  return {enc, ta, tp, ms, dec};
}

/// Median over `groups` of the mean of `per_group` timed calls, after
/// `warmup` untimed calls. Milliseconds.
inline double median_of_means_ms(const std::function<void()>& fn, int warmup = 3, int groups = 5,
                                 int per_group = 4) {
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> means;
  for (int g = 0; g < groups; ++g) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < per_group; ++i) fn();
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    means.push_back(ms / per_group);
  }
  std::sort(means.begin(), means.end());
  return means[means.size() / 2];
}

inline int timed_runs(int groups = 5, int per_group = 4) { return groups * per_group; }

/// Per-module latency of one inference pass on `sample`, each stage timed in
/// isolation with its inputs precomputed.
inline std::vector<double> time_modules(const ModelState& state, const ModelConfig& cfg, const Sample& sample) {
  const auto& e = cfg.encoder;
  const auto scales = cfg.active_scales();
  const int native = native_scale_index(scales);
  std::vector<double> ms(5, 0.0);
  const Tensor image = sample.image;
  const Tensor dem = normalize_dem(sample.dem);

  std::vector<FeatureGrid<float>> grids;
  ms[0] = median_of_means_ms([&] {
    grids.clear();
    for (double f : scales) {
      const int h = scaled_extent(e.image_h, f), w = scaled_extent(e.image_w, f);
      grids.push_back(encode_values(state, e, resize_values(image, h, w)));
    }
    if (cfg.uses_temporal())
      for (int t = 0; t + 1 < cfg.prompt.frames; ++t)
        (void)encode_values(state, e, sample.frames.at(sample.frames.size() - 2 - std::size_t(t)));
  });

  auto on_tape = [&](const std::function<void(Binder<float>&)>& body) {
    return median_of_means_ms([&] {
      Tape<float> tape;
      Binder<float> b(tape, state);
      b.set_inference(true);
      body(b);
    });
  };
  auto image_grids = [&](Binder<float>& b) {
    std::vector<TokenGrid<float>> out;
    for (const auto& g : grids) out.push_back({b.tape().constant(g.tokens), g.h, g.w});
    return out;
  };
  std::vector<FeatureGrid<float>> fused_grids = grids;
  if (cfg.adapter.enabled) {
    ms[1] = on_tape([&](Binder<float>& b) {
      auto in = image_grids(b);
      for (std::size_t i = 0; i < scales.size(); ++i) {
        const Tensor dm = resize_values(dem, scaled_extent(e.image_h, scales[i]), scaled_extent(e.image_w, scales[i]));
        auto fe = encode_dem(b, b.tape().constant(dm), e.patch, in[i].h, in[i].w);
        fused_grids[i].tokens = gated_fuse(b, fe, in[i]).tokens.value();
      }
    });
  }
  std::optional<Tensor> prompts;
  if (cfg.uses_temporal()) {
    std::vector<FeatureGrid<float>> frames;
    for (int t = cfg.prompt.frames - 1; t >= 0; --t)
      frames.push_back(encode_values(state, e, sample.frames.at(sample.frames.size() - 1 - std::size_t(t))));
    ms[2] = on_tape([&](Binder<float>& b) {
      std::vector<TokenGrid<float>> fr;
      for (const auto& f : frames) fr.push_back({b.tape().constant(f.tokens), f.h, f.w});
      prompts = synthesize_prompts(b, temporal_encode(b, fr, cfg.prompt.heads), cfg.prompt.k).value();
    });
  } else if (cfg.effective_strategy() == PromptStrategy::kLearned) {
    prompts = state.value(kLearnedPrompts);
  }
  FeatureGrid<float> fused = fused_grids[static_cast<std::size_t>(native)];
  if (cfg.fusion.enabled) {
    ms[3] = on_tape([&](Binder<float>& b) {
      std::vector<TokenGrid<float>> in;
      for (const auto& g : fused_grids) in.push_back({b.tape().constant(g.tokens), g.h, g.w});
      fused.tokens = cross_scale_fuse(b, in, native, cfg.fusion.heads).tokens.value();
    });
  }
  ms[4] = on_tape([&](Binder<float>& b) {
    std::optional<Var<float>> p;
    if (prompts) p = b.tape().constant(*prompts);
    (void)decode(b, cfg.decoder, TokenGrid<float>{b.tape().constant(fused.tokens), fused.h, fused.w}, p,
                 e.image_h, e.image_w);
  });
  return ms;
}

/// Parameters and FLOPs (and optionally latency on `sample`) for `cfg`.
inline EfficiencyReport efficiency_report(const ModelConfig& cfg, std::uint64_t seed,
                                          const Sample* sample = nullptr) {
  const ModelState state = init_model(cfg, seed);
  EfficiencyReport r;
  r.modules = count_params(state);
  const auto fl = count_flops(cfg);
  for (std::size_t i = 0; i < r.modules.size(); ++i) r.modules[i].flops = fl[i];
  if (r.total_params() != state.count(true) + state.count(false))
    throw ContractError("parameter groups do not cover the model state");
  if (sample) {
    const auto ms = time_modules(state, cfg, *sample);
    for (std::size_t i = 0; i < r.modules.size(); ++i) r.modules[i].ms = ms[i];
    r.timed = true;
  }
  return r;
}

/// Trainable parameters of the three added modules (adapter, temporal
/// prompt generator, scale fusion).
inline std::int64_t added_module_params(const EfficiencyReport& r) {
  return r.at("ta_adapter").params + r.at("tp_prompt").params + r.at("ms_fusion").params;
}

}  // namespace geoadapt
