// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference gradient checking.
//
//   numeric  = (f(w + h e_i) - f(w - h e_i)) / 2h
//   rel. err = |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
//
// The module checks run the templated model code in double precision, which
// keeps truncation and round-off well below the tolerance. Large tensors are
// checked on a seeded random subset of coordinates.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "geoadapt/geodata.hpp"
#include "geoadapt/model.hpp"

namespace geoadapt {

struct GradcheckOptions {
  double h = 1e-5;
  double tol = 1e-3;
  int max_coords = 8;  // per parameter tensor; <= 0 checks every coordinate
  std::uint64_t seed = 0;
};

struct GradcheckReport {
  std::string name;
  double tol = 0.0;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::map<std::string, double> per_param;
  std::vector<double> errors;  // one per checked coordinate
  bool pass() const { return max_rel_error < tol; }
  double fraction_below(double t) const {
    if (errors.empty()) return 1.0;
    return double(std::count_if(errors.begin(), errors.end(), [t](double e) { return e < t; })) /
           double(errors.size());
  }
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

template <typename T>
using LossFn = std::function<Var<T>(Binder<T>&)>;

/// Checks every non-frozen entry of `params` against finite differences of
/// `loss`. Throws ReproducibilityError if two evaluations at the same point
/// disagree.
template <typename T>
GradcheckReport gradcheck(const std::string& name, ParameterSet<T>& params, const LossFn<T>& loss,
                          const GradcheckOptions& opt) {
  if (!(opt.h > 0.0)) throw ConfigError("finite-difference step h must be positive");
  auto eval = [&]() {
    Tape<T> tape;
    Binder<T> b(tape, params);
    b.set_inference(true);
    return loss(b).value()[0];
  };
  const T f0 = eval();
  const T f1 = eval();
  if (std::memcmp(&f0, &f1, sizeof(T)) != 0) {
    throw ReproducibilityError(name + ": forward pass is not deterministic (" + std::to_string(double(f0)) +
                               " vs " + std::to_string(double(f1)) + ")");
  }
  GradientMap<T> grads;
  {
    Tape<T> tape;
    Binder<T> b(tape, params);
    grads = tape.backward(loss(b));
  }
  GradcheckReport rep;
  rep.name = name;
  rep.tol = opt.tol;
  Rng rng(derive_seed(opt.seed, 0x9c));
  for (auto& [pname, e] : params.entries()) {
    if (e.frozen) continue;
    auto git = grads.find(pname);
    if (git == grads.end()) throw ContractError(name + ": no gradient for trainable parameter " + pname);
    const std::int64_t n = e.value.size();
    std::vector<std::int64_t> coords;
    if (opt.max_coords <= 0 || n <= opt.max_coords) {
      for (std::int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      auto perm = rng.permutation(static_cast<int>(n));
      for (int i = 0; i < opt.max_coords; ++i) coords.push_back(perm[static_cast<std::size_t>(i)]);
    }
    double worst = 0.0;
    for (auto i : coords) {
      const T saved = e.value[i];
      e.value[i] = saved + static_cast<T>(opt.h);
      const double fp = eval();
      e.value[i] = saved - static_cast<T>(opt.h);
      const double fm = eval();
      e.value[i] = saved;
      const double numeric = (fp - fm) / (2.0 * opt.h);
      const double err = relative_error(double(git->second[i]), numeric);
      rep.errors.push_back(err);
      worst = std::max(worst, err);
    }
    rep.per_param[pname] = worst;
    if (worst >= rep.max_rel_error) {
      rep.max_rel_error = worst;
      rep.worst_param = pname;
    }
  }
  return rep;
}

namespace detail {

// Random bounded values (|x| <= scale) as a parameter-set entry.
inline Tensor uniform_tensor(Shape s, double scale, Rng& rng) {
  Tensor t(std::move(s));
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-scale, scale));
  return t;
}

// Weighted sum with fixed random weights: a scalar that depends on every
// output element with distinct sensitivities.
template <typename T>
Var<T> probe(Binder<T>& p, Var<T> x, const std::string& key) {
  return ops::sum(ops::mul(x, p(key)));
}

}  // namespace detail

/// Small configuration used by the module and end-to-end checks.
inline ModelConfig gradcheck_config() {
  ModelConfig c;
  c.encoder.image_h = 32;
  c.encoder.image_w = 32;
  return c;
}

/// Module names accepted by run_gradcheck, in report order.
inline std::vector<std::string> gradcheck_modules() { return {"ta", "tp", "ms", "dec", "e2e"}; }

/// Runs the named check: one of gradcheck_modules().
inline GradcheckReport run_gradcheck(const std::string& module, GradcheckOptions opt = {}) {
  const ModelConfig cfg = gradcheck_config();
  const std::int64_t d = cfg.encoder.dim;
  Rng rng(derive_seed(opt.seed, 0x31));
  ModelState s;

  if (module == "ta") {
    const std::int64_t hw = 32, g = hw / cfg.encoder.patch;
    init_terrain_adapter(s, cfg.adapter, d, rng);
    s.add("input/dem", detail::uniform_tensor({1, hw, hw}, 1.0, rng), true);
    s.add("input/image_tokens", detail::uniform_tensor({g * g, d}, 1.0, rng), false);
    s.add("probe/w", detail::uniform_tensor({g * g, d}, 1.0, rng), true);
    auto params = s.cast<double>();
    const int patch = cfg.encoder.patch;
    return gradcheck<double>("ta", params, [&](Binder<double>& p) {
      TokenGrid<double> fe = encode_dem(p, p("input/dem"), patch, g, g);
      TokenGrid<double> img{p("input/image_tokens"), g, g};
      return detail::probe(p, gated_fuse(p, fe, img).tokens, "probe/w");
    }, opt);
  }
  if (module == "tp") {
    const std::int64_t g = 4;
    init_temporal_prompt(s, cfg.prompt, d, rng);
    for (int t = 0; t < cfg.prompt.frames; ++t)
      s.add("input/frame" + std::to_string(t), detail::uniform_tensor({g * g, d}, 1.0, rng), false);
    s.add("probe/w", detail::uniform_tensor({cfg.prompt.k, d}, 1.0, rng), true);
    auto params = s.cast<double>();
    return gradcheck<double>("tp", params, [&](Binder<double>& p) {
      std::vector<TokenGrid<double>> frames;
      for (int t = 0; t < cfg.prompt.frames; ++t) frames.push_back({p("input/frame" + std::to_string(t)), g, g});
      auto temp = temporal_encode(p, frames, cfg.prompt.heads);
      return detail::probe(p, synthesize_prompts(p, temp, cfg.prompt.k), "probe/w");
    }, opt);
  }
  if (module == "ms") {
    init_scale_fusion(s, d, rng);
    const std::vector<std::int64_t> grids{2, 4, 8};
    for (std::size_t i = 0; i < grids.size(); ++i)
      s.add("input/scale" + std::to_string(i), detail::uniform_tensor({grids[i] * grids[i], d}, 1.0, rng), false);
    s.add("probe/w", detail::uniform_tensor({16, d}, 1.0, rng), true);
    auto params = s.cast<double>();
    return gradcheck<double>("ms", params, [&](Binder<double>& p) {
      std::vector<TokenGrid<double>> gs;
      for (std::size_t i = 0; i < grids.size(); ++i)
        gs.push_back({p("input/scale" + std::to_string(i)), grids[i], grids[i]});
      return detail::probe(p, cross_scale_fuse(p, gs, 1, cfg.fusion.heads).tokens, "probe/w");
    }, opt);
  }
  if (module == "dec") {
    const std::int64_t g = 4, hw = 32;
    init_mask_decoder(s, cfg.decoder, d, rng);
    s.add("input/tokens", detail::uniform_tensor({g * g, d}, 1.0, rng), false);
    s.add("input/prompts", detail::uniform_tensor({cfg.prompt.k, d}, 1.0, rng), false);
    std::vector<int> labels(static_cast<std::size_t>(hw * hw));
    for (auto& y : labels) y = static_cast<int>(rng.below(std::uint64_t(cfg.decoder.classes)));
    auto params = s.cast<double>();
    return gradcheck<double>("dec", params, [&](Binder<double>& p) {
      TokenGrid<double> fused{p("input/tokens"), g, g};
      auto logits = decode(p, cfg.decoder, fused, std::optional{p("input/prompts")}, hw, hw);
      return ops::cross_entropy(logits, std::span<const int>(labels));
    }, opt);
  }
  if (module == "e2e") {
    GenConfig gen;
    gen.height = gen.width = 32;
    gen.seed = opt.seed;
    const Sample sample = generate_sample(gen, derive_seed(opt.seed, 0xe2e));
    ModelState model = init_model(cfg, opt.seed);
    auto params = model.cast<double>();
    // The frozen encoder sits upstream of every trainable module, so its
    // outputs are computed once; the trainable graph is rebuilt per probe.
    const PreparedSample<double> prepared = prepare_sample(params, cfg, sample);
    return gradcheck<double>("e2e", params, [&](Binder<double>& p) {
      CachedSource<double> src(prepared);
      return forward_loss(p, cfg, src);
    }, opt);
  }
  throw ConfigError("unknown gradcheck module '" + module + "' (expected all|ta|tp|ms|dec|e2e)");
}

/// Default tolerance per check: module graphs 1e-3, end-to-end 1e-2.
inline double default_tolerance(const std::string& module) { return module == "e2e" ? 1e-2 : 1e-3; }

}  // namespace geoadapt
