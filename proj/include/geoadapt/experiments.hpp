// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

// Ablation matrix and parameter sweeps. Every variant shares one frozen
// feature cache per split; only the trainable path differs.

#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "geoadapt/efficiency.hpp"
#include "geoadapt/train.hpp"

namespace geoadapt {

struct Variant {
  std::string label;
  TrainConfig config;
};

/// Baseline, the three single removals, and the full model.
inline std::vector<Variant> ablation_variants(const TrainConfig& base) {
  auto make = [&](const char* label, bool ta, bool tp, bool ms) {
    Variant v{label, base};
    v.config.model.adapter.enabled = ta;
    v.config.model.prompt.enabled = tp;
    v.config.model.fusion.enabled = ms;
    return v;
  };
  return {make("baseline", false, false, false), make("w/o terrain", false, true, true),
          make("w/o temporal", true, false, true), make("w/o multiscale", true, true, false),
          make("full", true, true, true)};
}

inline std::vector<int> default_prompt_counts() { return {1, 2, 4, 6, 8}; }
inline std::vector<int> default_windows() { return {1, 2, 3, 4, 5}; }

inline std::vector<Variant> prompt_sweep_variants(const TrainConfig& base, const std::vector<int>& ks) {
  std::vector<Variant> out;
  for (int k : ks) {
    Variant v{"k=" + std::to_string(k), base};
    v.config.model.prompt.enabled = true;
    v.config.model.prompt.strategy = PromptStrategy::kTemporal;
    v.config.model.prompt.k = k;
    out.push_back(v);
  }
  return out;
}

inline std::vector<Variant> temporal_sweep_variants(const TrainConfig& base, const std::vector<int>& ts) {
  std::vector<Variant> out;
  for (int t : ts) {
    Variant v{"T=" + std::to_string(t), base};
    v.config.model.prompt.enabled = true;
    v.config.model.prompt.strategy = PromptStrategy::kTemporal;
    v.config.model.prompt.frames = t;
    out.push_back(v);
  }
  return out;
}

/// Prompt-source comparison: temporal against learned, point and box.
inline std::vector<Variant> strategy_variants(const TrainConfig& base) {
  std::vector<Variant> out;
  for (auto s : {PromptStrategy::kTemporal, PromptStrategy::kLearned, PromptStrategy::kPoint, PromptStrategy::kBox}) {
    Variant v{to_string(s), base};
    v.config.model.prompt.enabled = true;
    v.config.model.prompt.strategy = s;
    out.push_back(v);
  }
  return out;
}

struct VariantResult {
  std::string label;
  std::vector<std::uint64_t> seeds;
  std::vector<RunRecord> runs;  // one per seed, states dropped
  Metrics mean;                 // seed average
  std::int64_t trainable_params = 0;
  std::int64_t flops = 0;
};

/// Frozen features for a train/eval pair under the widest scale set.
struct CachedSplits {
  const Dataset* train = nullptr;
  FeatureCache train_cache;
  FeatureCache eval_cache;
};

inline CachedSplits cache_splits(const ModelConfig& cfg, const Dataset& train, const Dataset& eval) {
  const ModelState frozen = init_model(cfg, 0);
  return {&train, build_cache(frozen, cfg, train), build_cache(frozen, cfg, eval)};
}

using ProgressFn = std::function<void(const std::string& label, std::uint64_t seed, const RunRecord&)>;

/// Trains every variant for every seed. Runs with identical effective
/// configuration and seed are trained once and shared across calls through
/// `memo` (keyed by the serialised configuration).
inline std::vector<VariantResult> run_variants(const std::vector<Variant>& variants,
                                               const std::vector<std::uint64_t>& seeds, const CachedSplits& data,
                                               std::map<std::string, RunRecord>* memo = nullptr,
                                               const ProgressFn& progress = {}) {
  std::vector<VariantResult> out;
  for (const auto& v : variants) {
    VariantResult r;
    r.label = v.label;
    r.seeds = seeds;
    const auto fl = count_flops(v.config.model);
    for (auto f : fl) r.flops += f;
    for (auto seed : seeds) {
      TrainConfig c = v.config;
      c.seed = seed;
      std::ostringstream key;
      key << seed << '|' << v.config.model.adapter.enabled << v.config.model.prompt.enabled
          << v.config.model.fusion.enabled << '|' << to_string(c.model.prompt.strategy) << '|' << c.model.prompt.k
          << '|' << c.model.prompt.frames << '|' << c.epochs << '|' << c.lr << '|' << c.batch_size << '|'
          << c.weight_decay << '|' << c.max_steps;
      RunRecord rec;
      if (memo && memo->count(key.str())) {
        rec = memo->at(key.str());
      } else {
        rec = train(c, *data.train, &data.train_cache, &data.eval_cache);
        rec.state = ModelState();
        if (memo) (*memo)[key.str()] = rec;
      }
      rec.label = v.label;
      if (progress) progress(v.label, seed, rec);
      r.trainable_params = rec.trainable_params;
      r.runs.push_back(std::move(rec));
    }
    const double n = double(r.runs.size());
    r.mean.class_iou.assign(static_cast<std::size_t>(v.config.model.decoder.classes), 0.0);
    for (const auto& run : r.runs) {
      const Metrics& m = *run.metrics;
      r.mean.miou += m.miou / n;
      r.mean.f1 += m.f1 / n;
      r.mean.precision += m.precision / n;
      r.mean.recall += m.recall / n;
      for (std::size_t k = 0; k < m.class_iou.size(); ++k) r.mean.class_iou[k] += m.class_iou[k] / n;
    }
    out.push_back(std::move(r));
  }
  return out;
}

/// Number of seeds on which `pick(a) - pick(b) >= margin`.
inline int seeds_with_gap(const VariantResult& a, const VariantResult& b, double margin,
                          const std::function<double(const Metrics&)>& pick) {
  int wins = 0;
  for (std::size_t i = 0; i < a.runs.size() && i < b.runs.size(); ++i)
    if (pick(*a.runs[i].metrics) - pick(*b.runs[i].metrics) >= margin) ++wins;
  return wins;
}

inline std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

inline std::string csv_header() { return "variant,miou,f1,precision,recall,params,flops,ms"; }

inline std::string csv_row(const std::string& label, const Metrics& m, std::int64_t params, std::int64_t flops,
                           const std::string& ms = "") {
  return label + "," + fmt(m.miou, 6) + "," + fmt(m.f1, 6) + "," + fmt(m.precision, 6) + "," +
         fmt(m.recall, 6) + "," + std::to_string(params) + "," + std::to_string(flops) + "," + ms;
}

/// Seed-averaged table, one row per variant.
inline std::string results_csv(const std::vector<VariantResult>& rows) {
  std::string s = csv_header() + "\n";
  for (const auto& r : rows) s += csv_row(r.label, r.mean, r.trainable_params, r.flops) + "\n";
  return s;
}

/// One row per (variant, seed) with per-class IoU.
inline std::string per_seed_csv(const std::vector<VariantResult>& rows) {
  std::string s = "variant,seed,miou,f1,precision,recall";
  const std::size_t c = rows.empty() ? 0 : rows[0].mean.class_iou.size();
  for (std::size_t k = 0; k < c; ++k) s += ",iou_" + std::to_string(k);
  s += ",final_loss\n";
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.runs.size(); ++i) {
      const Metrics& m = *r.runs[i].metrics;
      s += r.label + "," + std::to_string(r.seeds[i]) + "," + fmt(m.miou, 6) + "," + fmt(m.f1, 6) + "," +
           fmt(m.precision, 6) + "," + fmt(m.recall, 6);
      for (double v : m.class_iou) s += "," + fmt(v, 6);
      s += "," + fmt(r.runs[i].epoch_loss.back(), 6) + "\n";
    }
  return s;
}

/// Aligned text table (values in percent, like a results table).
inline std::string results_table(const std::string& title, const std::vector<VariantResult>& rows) {
  std::size_t w = 8;
  for (const auto& r : rows) w = std::max(w, r.label.size());
  auto pad = [](std::string s, std::size_t n) {
    s.resize(std::max(n, s.size()), ' ');
    return s;
  };
  std::string s = title + "\n" + pad("variant", w) + "   mIoU     F1   Prec    Rec   params\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "  %6.2f %6.2f %6.2f %6.2f %8lld\n", 100 * r.mean.miou, 100 * r.mean.f1,
                  100 * r.mean.precision, 100 * r.mean.recall, static_cast<long long>(r.trainable_params));
    s += pad(r.label, w) + " " + buf;
  }
  return s;
}

}  // namespace geoadapt
