// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "geoadapt/geodata.hpp"
#include "geoadapt/metrics.hpp"
#include "geoadapt/model.hpp"
#include "geoadapt/optim.hpp"

namespace geoadapt {

struct TrainConfig {
  ModelConfig model;
  double lr = 5e-4;
  double weight_decay = 0.01;
  int batch_size = 8;
  int epochs = 30;
  std::uint64_t seed = 0;
  // Optimizer steps to run before stopping early; 0 runs every epoch.
  std::int64_t max_steps = 0;
  // Test hook: train through a live encoder whose weights are not frozen.
  bool unfreeze_encoder = false;
};

inline void validate(const TrainConfig& c) {
  validate(c.model);
  if (!(c.lr >= 0.0) || !std::isfinite(c.lr)) throw ConfigError("learning rate must be finite and >= 0");
  if (!(c.weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (c.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
}

/// Frozen-encoder outputs for every sample of a dataset.
struct FeatureCache {
  std::vector<PreparedSample<float>> samples;
  std::size_t size() const { return samples.size(); }
};

inline FeatureCache build_cache(const ModelState& params, const ModelConfig& cfg, const Dataset& d) {
  FeatureCache c;
  c.samples.reserve(d.size());
  for (const auto& s : d.samples) c.samples.push_back(prepare_sample(params, cfg, s, true));
  return c;
}

struct RunRecord {
  std::string label;
  TrainConfig config;
  std::vector<double> epoch_loss;  // mean training loss per epoch
  std::vector<double> step_loss;   // mean batch loss per optimizer step
  std::optional<Metrics> metrics;  // on the evaluation split, when given
  std::int64_t trainable_params = 0;
  double wall_seconds = 0.0;
  bool frozen_intact = false;
  ModelState state;
};

struct TrainHooks {
  // Called after every optimizer step with (step, batch loss).
  std::function<void(std::int64_t, double)> on_step;
  // Overrides the initial state (after init); used by tests.
  std::function<void(ModelState&)> edit_initial;
};

namespace detail {

inline void check_finite(const GradientMap<float>& g, double loss, std::int64_t step) {
  std::string first;
  std::set<std::string> modules;
  for (const auto& [name, t] : g) {
    if (t.all_finite()) continue;
    if (first.empty()) first = name;
    modules.insert(name.substr(0, name.find('/')));
  }
  if (!first.empty()) {
    std::string all;
    for (const auto& m : modules) all += (all.empty() ? "" : ", ") + m;
    throw NumericError("non-finite gradient at step " + std::to_string(step) + " in module '" +
                       first.substr(0, first.find('/')) + "' (parameter " + first + "; affected modules: " + all +
                       "; loss " + std::to_string(loss) + ")");
  }
  if (!std::isfinite(loss))
    throw NumericError("non-finite loss at step " + std::to_string(step) + " in module 'decoder' (loss)");
}

}  // namespace detail

/// Confusion matrix of argmax predictions over a cached split.
inline ConfusionMatrix evaluate(const ModelState& state, const ModelConfig& cfg, const FeatureCache& data,
                                std::vector<std::vector<int>>* predictions = nullptr) {
  ConfusionMatrix cm(cfg.decoder.classes);
  for (const auto& s : data.samples) {
    const auto pred = argmax_labels(predict_logits(state, cfg, s));
    cm.accumulate(pred, s.labels);
    if (predictions) predictions->push_back(pred);
  }
  return cm;
}

inline Metrics summarize_eval(const ModelState& state, const ModelConfig& cfg, const FeatureCache& data) {
  return summarize(evaluate(state, cfg, data));
}

/// Trains the configured modules on `cache` (or on live encodings of `data`
/// when the encoder is deliberately unfrozen) and evaluates on `eval` when
/// given. The shuffle order depends only on the seed.
inline RunRecord train(const TrainConfig& cfg, const Dataset& data, const FeatureCache* cache,
                       const FeatureCache* eval = nullptr, const TrainHooks& hooks = {}) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  if (data.size() == 0) throw DataError("training dataset is empty");
  if (cache && cache->size() != data.size()) throw ContractError("feature cache does not match the dataset");
  std::optional<FeatureCache> own;
  RunRecord rec;
  rec.config = cfg;
  rec.state = init_model(cfg.model, cfg.seed);
  if (hooks.edit_initial) hooks.edit_initial(rec.state);
  if (cfg.unfreeze_encoder) {
    for (auto& [name, e] : rec.state.entries()) e.frozen = false;
  } else if (!cache) {
    own = build_cache(rec.state, cfg.model, data);
    cache = &*own;
  }
  const ModelState snapshot = rec.state.frozen_snapshot();
  rec.trainable_params = rec.state.count(false);

  AdamW opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng shuffle(derive_seed(cfg.seed, 0x5f));
  const int n = static_cast<int>(data.size());
  std::int64_t step = 0;
  bool stop = false;
  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    const auto order = shuffle.permutation(n);
    double epoch_sum = 0.0;
    int epoch_count = 0;
    for (int b0 = 0; b0 < n && !stop; b0 += cfg.batch_size) {
      const int b1 = std::min(n, b0 + cfg.batch_size);
      GradientMap<float> acc;
      double batch_loss = 0.0;
      ++step;
      for (int i = b0; i < b1; ++i) {
        const int idx = order[static_cast<std::size_t>(i)];
        Tape<float> tape;
        Binder<float> binder(tape, rec.state);
        Var<float> loss;
        if (cfg.unfreeze_encoder) {
          LiveSource<float> src(cfg.model, data.samples[static_cast<std::size_t>(idx)]);
          loss = forward_loss(binder, cfg.model, src);
        } else {
          CachedSource<float> src(cache->samples[static_cast<std::size_t>(idx)]);
          loss = forward_loss(binder, cfg.model, src);
        }
        const double lv = loss.value()[0];
        auto grads = tape.backward(loss);
        detail::check_finite(grads, lv, step);
        batch_loss += lv;
        for (auto& [name, g] : grads) {
          auto it = acc.find(name);
          if (it == acc.end()) {
            acc.emplace(name, std::move(g));
          } else {
            float* dst = it->second.data();
            const float* src = g.data();
            for (std::int64_t j = 0; j < g.size(); ++j) dst[j] += src[j];
          }
        }
      }
      const float inv = 1.0f / float(b1 - b0);
      for (auto& [name, g] : acc)
        for (auto& v : g.values()) v *= inv;
      opt.step(rec.state, acc);
      batch_loss /= double(b1 - b0);
      rec.step_loss.push_back(batch_loss);
      epoch_sum += batch_loss * (b1 - b0);
      epoch_count += b1 - b0;
      if (hooks.on_step) hooks.on_step(step, batch_loss);
      if (cfg.max_steps > 0 && step >= cfg.max_steps) stop = true;
    }
    rec.epoch_loss.push_back(epoch_sum / epoch_count);
  }
  rec.frozen_intact = freeze_check(rec.state, snapshot);
  if (eval) rec.metrics = summarize_eval(rec.state, cfg.model, *eval);
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

}  // namespace geoadapt
