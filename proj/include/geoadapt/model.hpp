// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

// Assembles the full pipeline:
//
//   per scale s:  F_img(s) = Enc(resize(I, s)),  F_dem(s) = DemCNN(resize(E, s))
//                 F(s)     = gate(F_dem(s), F_img(s))            [terrain]
//   F_fused = F(native) + CrossAttn(F(native), {F(s)})           [multiscale]
//   P       = MLP(Pool(TemporalAttn(Enc(I_t))))                  [temporal]
//   logits  = Decoder([F_fused | P])
//
// The encoder is frozen, so its outputs can be computed once per sample and
// reused. PreparedSample holds those cached values; LiveSource recomputes
// them on the caller's tape, which is needed only when the encoder is
// deliberately unfrozen.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "geoadapt/encoder.hpp"
#include "geoadapt/mask_decoder.hpp"
#include "geoadapt/model_config.hpp"
#include "geoadapt/params.hpp"
#include "geoadapt/sample.hpp"
#include "geoadapt/scale_fusion.hpp"
#include "geoadapt/temporal_prompt.hpp"
#include "geoadapt/terrain_adapter.hpp"

namespace geoadapt {

/// Frozen encoder plus every trainable group the configuration enables.
inline ModelState init_model(const ModelConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  ModelState s;
  init_encoder(s, cfg.encoder);
  const std::int64_t d = cfg.encoder.dim;
  // Each trainable group draws from its own stream so that toggling one
  // module leaves the initial weights of the others unchanged.
  if (cfg.adapter.enabled) {
    Rng rng(derive_seed(seed, 1));
    init_terrain_adapter(s, cfg.adapter, d, rng);
  }
  if (cfg.uses_temporal()) {
    Rng rng(derive_seed(seed, 2));
    init_temporal_prompt(s, cfg.prompt, d, rng);
  } else if (cfg.effective_strategy() == PromptStrategy::kLearned) {
    Rng rng(derive_seed(seed, 3));
    init_learned_prompts(s, cfg.prompt.k, d, rng);
  }
  if (cfg.fusion.enabled) {
    Rng rng(derive_seed(seed, 4));
    init_scale_fusion(s, d, rng);
  }
  Rng rng(derive_seed(seed, 5));
  init_mask_decoder(s, cfg.decoder, d, rng);
  return s;
}

template <typename T>
BasicTensor<T> resize_values(const BasicTensor<T>& x, std::int64_t h, std::int64_t w) {
  if (x.dim(1) == h && x.dim(2) == w) return x;
  auto ay = kernels::linear_axis(x.dim(1), h);
  auto ax = kernels::linear_axis(x.dim(2), w);
  BasicTensor<T> out(Shape{x.dim(0), h, w});
  kernels::bilinear_forward(x.dim(0), x.dim(1), x.dim(2), ay, ax, x.data(), out.data());
  return out;
}

/// Supplies encoder grids and DEM rasters to the forward pass.
template <typename T>
class InputSource {
 public:
  virtual ~InputSource() = default;
  virtual TokenGrid<T> image(Binder<T>& p, double factor) const = 0;
  // Frame by position counted from the most recent observation (0 = latest).
  virtual TokenGrid<T> frame(Binder<T>& p, int back) const = 0;
  virtual int frame_count() const = 0;
  virtual BasicTensor<T> dem(double factor) const = 0;
  virtual FeatureGrid<T> native_features(Binder<T>& p) const = 0;
  virtual const std::vector<int>& labels() const = 0;
  virtual std::int64_t height() const = 0;
  virtual std::int64_t width() const = 0;
  virtual std::uint64_t seed() const = 0;
};

/// Cached frozen-encoder outputs for one sample.
template <typename T>
struct PreparedSample {
  std::vector<double> factors;
  std::vector<FeatureGrid<T>> scale_features;
  std::vector<BasicTensor<T>> scale_dem;
  std::vector<FeatureGrid<T>> frame_features;  // oldest first; last = latest
  std::vector<int> labels;
  std::int64_t height = 0, width = 0;
  std::uint64_t seed = 0;
};

inline void check_sample(const ModelConfig& cfg, const Sample& s) {
  const auto& e = cfg.encoder;
  if (s.image.ndim() != 3 || s.image.dim(0) != 3)
    throw DataError("sample image must be 3 x H x W, got " + shape_str(s.image.shape()));
  if (s.image.dim(1) != e.image_h || s.image.dim(2) != e.image_w)
    throw ConfigError("sample extents " + std::to_string(s.image.dim(1)) + "x" +
                      std::to_string(s.image.dim(2)) + " differ from configured " +
                      std::to_string(e.image_h) + "x" + std::to_string(e.image_w));
  if (s.dem.shape() != Shape{1, s.image.dim(1), s.image.dim(2)})
    throw DataError("DEM shape " + shape_str(s.dem.shape()) + " does not match the image");
  if (static_cast<std::int64_t>(s.labels.size()) != s.image.dim(1) * s.image.dim(2))
    throw DataError("label count does not match the image");
  for (int y : s.labels)
    if (y < 0 || y >= cfg.decoder.classes)
      throw DataError("label " + std::to_string(y) + " outside [0, " +
                      std::to_string(cfg.decoder.classes) + ")");
}

/// Runs the frozen encoder for every scale in cfg.fusion.scales (or native
/// only when `all_scales` is false and fusion is off) and every frame.
template <typename T>
PreparedSample<T> prepare_sample(const ParameterSet<T>& params, const ModelConfig& cfg,
                                 const Sample& s, bool all_scales = true) {
  check_sample(cfg, s);
  PreparedSample<T> out;
  out.factors = (all_scales || cfg.fusion.enabled) ? cfg.fusion.scales : std::vector<double>{1.0};
  out.height = s.image.dim(1);
  out.width = s.image.dim(2);
  out.labels = s.labels;
  out.seed = s.seed;
  const BasicTensor<T> image = s.image.template cast<T>();
  const BasicTensor<T> dem = normalize_dem(s.dem.template cast<T>());
  for (double f : out.factors) {
    const int h = scaled_extent(int(out.height), f), w = scaled_extent(int(out.width), f);
    out.scale_features.push_back(encode_values(params, cfg.encoder, resize_values(image, h, w)));
    out.scale_dem.push_back(resize_values(dem, h, w));
  }
  for (const auto& fr : s.frames) {
    out.frame_features.push_back(encode_values(params, cfg.encoder, fr.template cast<T>()));
  }
  return out;
}

template <typename T>
class CachedSource final : public InputSource<T> {
 public:
  explicit CachedSource(const PreparedSample<T>& s) : s_(s) {}

  TokenGrid<T> image(Binder<T>& p, double factor) const override {
    const auto& g = s_.scale_features[index(factor)];
    return TokenGrid<T>{p.tape().constant(g.tokens), g.h, g.w};
  }
  TokenGrid<T> frame(Binder<T>& p, int back) const override {
    const auto& g = s_.frame_features.at(s_.frame_features.size() - 1 - static_cast<std::size_t>(back));
    return TokenGrid<T>{p.tape().constant(g.tokens), g.h, g.w};
  }
  int frame_count() const override { return static_cast<int>(s_.frame_features.size()); }
  BasicTensor<T> dem(double factor) const override { return s_.scale_dem[index(factor)]; }
  FeatureGrid<T> native_features(Binder<T>&) const override {
    return s_.scale_features[index(1.0)];
  }
  const std::vector<int>& labels() const override { return s_.labels; }
  std::int64_t height() const override { return s_.height; }
  std::int64_t width() const override { return s_.width; }
  std::uint64_t seed() const override { return s_.seed; }

 private:
  std::size_t index(double factor) const {
    for (std::size_t i = 0; i < s_.factors.size(); ++i)
      if (s_.factors[i] == factor) return i;
    throw ConfigError("scale factor " + std::to_string(factor) + " was not prepared for this sample");
  }

  const PreparedSample<T>& s_;
};

/// Encodes on the caller's tape, so encoder leaves follow their frozen flags.
template <typename T>
class LiveSource final : public InputSource<T> {
 public:
  LiveSource(const ModelConfig& cfg, const Sample& s)
      : cfg_(cfg), s_(s), dem_(normalize_dem(s.dem.template cast<T>())) {
    check_sample(cfg, s);
  }

  TokenGrid<T> image(Binder<T>& p, double factor) const override {
    const int h = scaled_extent(int(height()), factor), w = scaled_extent(int(width()), factor);
    return encode(p, cfg_.encoder, resize_values(s_.image.template cast<T>(), h, w));
  }
  TokenGrid<T> frame(Binder<T>& p, int back) const override {
    return encode(p, cfg_.encoder,
                  s_.frames.at(s_.frames.size() - 1 - static_cast<std::size_t>(back)).template cast<T>());
  }
  int frame_count() const override { return static_cast<int>(s_.frames.size()); }
  BasicTensor<T> dem(double factor) const override {
    return resize_values(dem_, scaled_extent(int(height()), factor), scaled_extent(int(width()), factor));
  }
  FeatureGrid<T> native_features(Binder<T>& p) const override {
    return encode_values(p.params(), cfg_.encoder, s_.image.template cast<T>());
  }
  const std::vector<int>& labels() const override { return s_.labels; }
  std::int64_t height() const override { return s_.image.dim(1); }
  std::int64_t width() const override { return s_.image.dim(2); }
  std::uint64_t seed() const override { return s_.seed; }

 private:
  const ModelConfig& cfg_;
  const Sample& s_;
  BasicTensor<T> dem_;
};

template <typename T>
struct ForwardTrace {
  std::optional<Var<T>> native_gate;    // [tokens x d]
  std::vector<Var<T>> fusion_attention;  // per head [tokens x scales*tokens]
  DecoderTrace<T> decoder;
  std::int64_t grid_h = 0, grid_w = 0;
};

/// Prompt set for the configured strategy, or nullopt when k == 0 (test-only).
template <typename T>
std::optional<Var<T>> make_prompts(Binder<T>& p, const ModelConfig& cfg, const InputSource<T>& src) {
  const int k = cfg.prompt.k;
  if (k == 0) return std::nullopt;
  switch (cfg.effective_strategy()) {
    case PromptStrategy::kTemporal: {
      const int t = cfg.prompt.frames;
      if (t > src.frame_count()) {
        throw DataError("temporal window T=" + std::to_string(t) + " but the sample has " +
                        std::to_string(src.frame_count()) + " frames");
      }
      std::vector<TokenGrid<T>> frames;
      for (int b = t - 1; b >= 0; --b) frames.push_back(src.frame(p, b));
      return synthesize_prompts(p, temporal_encode(p, frames, cfg.prompt.heads), k);
    }
    case PromptStrategy::kLearned: return p(kLearnedPrompts);
    case PromptStrategy::kPoint:
      return p.tape().constant(point_prompts(src.native_features(p), std::span<const int>(src.labels()),
                                             src.height(), src.width(), k, cfg.decoder.classes,
                                             derive_seed(src.seed(), 77)));
    case PromptStrategy::kBox:
      return p.tape().constant(box_prompts(src.native_features(p), std::span<const int>(src.labels()),
                                           src.height(), src.width(), k, cfg.decoder.classes));
  }
  return std::nullopt;
}

/// Per-scale grids after the optional terrain gate.
template <typename T>
std::vector<TokenGrid<T>> multi_scale_encode(Binder<T>& p, const ModelConfig& cfg,
                                             const InputSource<T>& src,
                                             std::optional<Var<T>>* native_gate = nullptr) {
  const auto scales = cfg.active_scales();
  const int native = native_scale_index(scales);
  std::vector<TokenGrid<T>> grids;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    TokenGrid<T> img = src.image(p, scales[i]);
    if (cfg.adapter.enabled) {
      Var<T> dem = p.tape().constant(src.dem(scales[i]));
      TokenGrid<T> fe = encode_dem(p, dem, cfg.encoder.patch, img.h, img.w);
      Var<T> gate;
      img = gated_fuse(p, fe, img, &gate);
      if (native_gate && static_cast<int>(i) == native) *native_gate = gate;
    }
    grids.push_back(img);
  }
  return grids;
}

template <typename T>
Var<T> forward_logits(Binder<T>& p, const ModelConfig& cfg, const InputSource<T>& src,
                      ForwardTrace<T>* trace = nullptr) {
  std::optional<Var<T>> gate;
  auto grids = multi_scale_encode(p, cfg, src, &gate);
  const int native = native_scale_index(cfg.active_scales());
  TokenGrid<T> fused = cfg.fusion.enabled
                           ? cross_scale_fuse(p, grids, native, cfg.fusion.heads,
                                              trace ? &trace->fusion_attention : nullptr)
                           : grids[static_cast<std::size_t>(native)];
  auto prompts = make_prompts(p, cfg, src);
  if (trace) {
    trace->native_gate = gate;
    trace->grid_h = fused.h;
    trace->grid_w = fused.w;
  }
  return decode(p, cfg.decoder, fused, prompts, src.height(), src.width(),
                trace ? &trace->decoder : nullptr);
}

template <typename T>
Var<T> forward_loss(Binder<T>& p, const ModelConfig& cfg, const InputSource<T>& src) {
  Var<T> logits = forward_logits(p, cfg, src);
  return ops::cross_entropy(logits, std::span<const int>(src.labels()));
}

/// Inference on a cached sample; returns logits values.
template <typename T>
BasicTensor<T> predict_logits(const ParameterSet<T>& params, const ModelConfig& cfg,
                              const PreparedSample<T>& s) {
  Tape<T> tape;
  Binder<T> binder(tape, params);
  binder.set_inference(true);
  CachedSource<T> src(s);
  return forward_logits(binder, cfg, src).value();
}

/// Parameter-name prefixes of the trainable groups, in report order.
inline std::vector<std::string> trainable_groups() {
  return {"ta_adapter/", "tp_prompt/", "ms_fusion/", "decoder/"};
}

inline std::string group_of(const std::string& name) {
  const auto slash = name.find('/');
  return slash == std::string::npos ? name : name.substr(0, slash + 1);
}

}  // namespace geoadapt
