// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <numeric>

#include "test_util.hpp"

namespace geoadapt {
namespace {

std::vector<int> random_labels(std::size_t n, int classes, Rng& rng) {
  std::vector<int> v(n);
  for (auto& x : v) x = int(rng.below(std::uint64_t(classes)));
  return v;
}

TEST(Confusion, PerfectPredictionIsDiagonal) {
  Rng rng(1);
  const auto y = random_labels(256, 4, rng);
  ConfusionMatrix cm(4);
  cm.accumulate(y, y);
  for (int t = 0; t < 4; ++t)
    for (int p = 0; p < 4; ++p)
      if (t != p) {
        EXPECT_EQ(cm.at(t, p), 0);
      }
  EXPECT_EQ(cm.total(), 256);
}

TEST(Confusion, HalfBatchesEqualOneFullBatch) {
  Rng rng(2);
  const auto pred = random_labels(200, 4, rng), truth = random_labels(200, 4, rng);
  ConfusionMatrix full(4), a(4), b(4);
  full.accumulate(pred, truth);
  a.accumulate(std::span(pred).first(100), std::span(truth).first(100));
  b.accumulate(std::span(pred).subspan(100), std::span(truth).subspan(100));
  ConfusionMatrix ab = a, ba = b;
  ab.merge(b);
  ba.merge(a);
  EXPECT_EQ(ab, full);
  EXPECT_EQ(ba, full);
  ConfusionMatrix seq(4);
  seq.accumulate(std::span(pred).subspan(100), std::span(truth).subspan(100));
  seq.accumulate(std::span(pred).first(100), std::span(truth).first(100));
  EXPECT_EQ(seq, full);
}

TEST(Confusion, MatchesCountingOracleOn16x16) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pred = random_labels(256, 4, rng), truth = random_labels(256, 4, rng);
    ConfusionMatrix cm(4);
    cm.accumulate(pred, truth);
    for (int t = 0; t < 4; ++t)
      for (int p = 0; p < 4; ++p) {
        std::int64_t n = 0;
        for (int y = 0; y < 16; ++y)
          for (int x = 0; x < 16; ++x) n += truth[std::size_t(y * 16 + x)] == t && pred[std::size_t(y * 16 + x)] == p;
        EXPECT_EQ(cm.at(t, p), n);
      }
    EXPECT_EQ(cm.total(), 256);
  }
}

TEST(Confusion, InvalidIdsAreDataErrors) {
  ConfusionMatrix cm(3);
  const std::vector<int> good{0, 1, 2}, bad{0, 3, 1}, neg{0, -1, 1};
  EXPECT_THROW(cm.accumulate(bad, good), DataError);
  EXPECT_THROW(cm.accumulate(good, neg), DataError);
  EXPECT_EQ(cm.total(), 0);  // nothing counted on failure
  EXPECT_THROW(cm.accumulate(std::vector<int>{0, 1}, good), DimensionError);
}

TEST(Metrics, PerfectPredictionScoresOne) {
  Rng rng(4);
  const auto y = random_labels(100, 4, rng);
  ConfusionMatrix cm(4);
  cm.accumulate(y, y);
  const auto m = summarize(cm);
  EXPECT_DOUBLE_EQ(m.miou, 1.0);
  EXPECT_DOUBLE_EQ(m.f1, 1.0);
  EXPECT_DOUBLE_EQ(m.precision, 1.0);
  EXPECT_DOUBLE_EQ(m.recall, 1.0);
}

TEST(Metrics, BalancedTwoClassConfusion) {
  const ConfusionMatrix cm(2, {50, 50, 50, 50});
  EXPECT_NEAR(miou(cm), 1.0 / 3.0, 1e-6);
  EXPECT_NEAR(precision(cm), 0.5, 1e-12);
  EXPECT_NEAR(recall(cm), 0.5, 1e-12);
  EXPECT_NEAR(f1(cm), 0.5, 1e-12);
}

// Direct formula oracle: IoU_k = TP/(TP+FP+FN) etc., macro over classes
// appearing in truth or prediction.
struct Oracle {
  double miou, f1, p, r;
};

Oracle formula(const std::vector<std::vector<long long>>& m) {
  const std::size_t c = m.size();
  double si = 0, sf = 0, sp = 0, sr = 0;
  int n = 0;
  for (std::size_t k = 0; k < c; ++k) {
    long long tp = m[k][k], row = 0, col = 0;
    for (std::size_t j = 0; j < c; ++j) row += m[k][j], col += m[j][k];
    const long long fn = row - tp, fp = col - tp;
    if (tp + fp + fn == 0) continue;
    ++n;
    const double p = col ? double(tp) / double(col) : 0.0, r = row ? double(tp) / double(row) : 0.0;
    si += double(tp) / double(tp + fp + fn);
    sp += p;
    sr += r;
    sf += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  return {si / n, sf / n, sp / n, sr / n};
}

TEST(Metrics, RandomMatricesMatchFormulaOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int c = 2 + int(rng.below(5));
    std::vector<std::vector<long long>> m(static_cast<std::size_t>(c), std::vector<long long>(static_cast<std::size_t>(c)));
    std::vector<std::int64_t> flat;
    for (int t = 0; t < c; ++t)
      for (int p = 0; p < c; ++p) {
        // Some zero rows/columns so class absence is exercised.
        const long long v = rng.uniform() < 0.2 ? 0 : (long long)rng.below(1000);
        m[std::size_t(t)][std::size_t(p)] = v;
        flat.push_back(v);
      }
    if (std::accumulate(flat.begin(), flat.end(), std::int64_t(0)) == 0) flat[0] = m[0][0] = 1;
    const ConfusionMatrix cm(c, flat);
    const Oracle o = formula(m);
    EXPECT_NEAR(miou(cm), o.miou, 1e-9);
    EXPECT_NEAR(f1(cm), o.f1, 1e-9);
    EXPECT_NEAR(precision(cm), o.p, 1e-9);
    EXPECT_NEAR(recall(cm), o.r, 1e-9);
  }
}

TEST(Metrics, EmptyMatrixIsMetricError) {
  const ConfusionMatrix cm(4);
  EXPECT_THROW(miou(cm), MetricError);
  EXPECT_THROW(f1(cm), MetricError);
  EXPECT_THROW(precision(cm), MetricError);
  EXPECT_THROW(recall(cm), MetricError);
  EXPECT_THROW(summarize(cm), MetricError);
}

TEST(Metrics, OrderInvariants) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pred = random_labels(64, 4, rng), truth = random_labels(64, 4, rng);
    ConfusionMatrix cm(4);
    cm.accumulate(pred, truth);
    for (double v : {pixel_accuracy(cm), precision(cm), recall(cm), miou(cm), f1(cm)}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    for (int k = 0; k < 4; ++k) {
      const auto s = class_scores(cm, k);
      if (!s.present) continue;
      EXPECT_LE(s.f1, std::max(s.precision, s.recall) + 1e-12);
      EXPECT_GE(s.f1, std::min(s.precision, s.recall) - 1e-12);
      EXPECT_LE(s.iou, s.f1 + 1e-12);
    }
  }
}

TEST(Metrics, RelabelingInvariance) {
  Rng rng(7);
  const std::vector<int> perm{2, 0, 3, 1};
  for (int trial = 0; trial < 20; ++trial) {
    auto pred = random_labels(100, 4, rng), truth = random_labels(100, 4, rng);
    ConfusionMatrix a(4), b(4);
    a.accumulate(pred, truth);
    for (auto& v : pred) v = perm[std::size_t(v)];
    for (auto& v : truth) v = perm[std::size_t(v)];
    b.accumulate(pred, truth);
    EXPECT_NEAR(miou(a), miou(b), 1e-12);
    EXPECT_NEAR(f1(a), f1(b), 1e-12);
  }
}

TEST(Metrics, AbsentClassesAreExcluded) {
  // Class 3 occurs in neither truth nor prediction.
  const std::vector<int> truth{0, 0, 1, 1, 2, 2}, pred{0, 0, 1, 2, 2, 2};
  ConfusionMatrix cm(4);
  cm.accumulate(pred, truth);
  EXPECT_FALSE(class_scores(cm, 3).present);
  EXPECT_NEAR(miou(cm), (1.0 + 0.5 + 2.0 / 3.0) / 3.0, 1e-12);
  // A class predicted but never true still counts (IoU 0).
  const std::vector<int> pred2{0, 0, 1, 1, 2, 3};
  ConfusionMatrix cm2(4);
  cm2.accumulate(pred2, truth);
  EXPECT_TRUE(class_scores(cm2, 3).present);
  EXPECT_NEAR(miou(cm2), (1.0 + 1.0 + 0.5 + 0.0) / 4.0, 1e-12);
}

// ---------------------------------------------------------------- params

TEST(CountParams, LinearLayerIsDSquaredPlusD) {
  for (std::int64_t d : {1, 8, 64}) {
    ModelState s;
    Rng rng(8);
    init::linear(s, "decoder/probe", d, d, 0.1, rng, false);
    const auto rows = count_params(s);
    std::int64_t total = 0;
    for (const auto& r : rows) total += r.params;
    EXPECT_EQ(total, d * d + d);
    const EfficiencyReport rep{rows, false};
    EXPECT_EQ(rep.at("decoder").params, d * d + d);
  }
}

TEST(CountParams, FrozenEntriesExcludedFromTrainable) {
  const auto r = efficiency_report(ModelConfig{}, 0);
  const ModelState s = init_model(ModelConfig{}, 0);
  EXPECT_EQ(r.frozen_params(), s.count(true));
  EXPECT_EQ(r.trainable_params(), s.count(false));
  EXPECT_EQ(r.at("encoder").params, encoder_param_count(EncoderConfig{}));
}

TEST(CountParams, TrainableIsSmallFractionOfFrozen) {
  const auto r = efficiency_report(ModelConfig{}, 0);
  EXPECT_LT(double(r.trainable_params()), 0.15 * double(r.frozen_params()));
  EXPECT_LT(double(added_module_params(r)), 0.15 * double(r.at("encoder").params));
}

TEST(CountParams, TogglingAModuleRemovesExactlyItsParameters) {
  const ModelConfig full;
  const auto base = efficiency_report(full, 0);
  ModelConfig c = full;
  c.adapter.enabled = false;
  EXPECT_EQ(base.trainable_params() - efficiency_report(c, 0).trainable_params(), base.at("ta_adapter").params);
  c = full;
  c.fusion.enabled = false;
  EXPECT_EQ(base.trainable_params() - efficiency_report(c, 0).trainable_params(), base.at("ms_fusion").params);
  c = full;
  c.prompt.enabled = false;
  // The prompt generator gives way to k free prompt vectors.
  EXPECT_EQ(base.trainable_params() - efficiency_report(c, 0).trainable_params(),
            base.at("tp_prompt").params - std::int64_t(full.prompt.k) * full.encoder.dim);
  EXPECT_EQ(base.at("tp_prompt").params, temporal_prompt_param_count(4, 64));
  EXPECT_EQ(base.at("ms_fusion").params, scale_fusion_param_count(64));
  EXPECT_EQ(base.at("ta_adapter").params, terrain_adapter_param_count(AdapterConfig{}, 64, 8));
  EXPECT_EQ(base.at("decoder").params, mask_decoder_param_count(DecoderConfig{}, 64));
}

// ---------------------------------------------------------------- flops

TEST(CountFlops, ElementaryCounts) {
  EXPECT_EQ(flops::matmul(4, 5, 3), 120);
  EXPECT_EQ(flops::conv(1, 1, 3, 3, 8, 8), 1152);
  // q, k, v, o projections plus scores and weighted sum.
  EXPECT_EQ(flops::attention(3, 5, 4), 2 * 3 * 4 * 4 * 2 + 2 * 5 * 4 * 4 * 2 + 2 * 3 * 5 * 4 * 2);
}

TEST(CountFlops, TotalsEqualModuleSums) {
  for (bool ta : {false, true})
    for (bool tp : {false, true})
      for (bool ms : {false, true}) {
        ModelConfig c;
        c.adapter.enabled = ta, c.prompt.enabled = tp, c.fusion.enabled = ms;
        const auto r = efficiency_report(c, 0);
        std::int64_t p = 0, f = 0;
        for (const auto& m : r.modules) p += m.params, f += m.flops;
        EXPECT_EQ(r.total_params(), p);
        EXPECT_EQ(r.total_flops(), f);
        EXPECT_EQ(r.total_params(), init_model(c, 0).count(true) + init_model(c, 0).count(false));
      }
}

TEST(CountFlops, DisablingAModuleLowersFlops) {
  const ModelConfig full;
  const auto total = efficiency_report(full, 0).total_flops();
  ModelConfig c = full;
  c.adapter.enabled = false;
  EXPECT_LT(efficiency_report(c, 0).total_flops(), total);
  c = full;
  c.prompt.enabled = false;
  EXPECT_LT(efficiency_report(c, 0).total_flops(), total);
  c = full;
  c.fusion.enabled = false;
  EXPECT_LT(efficiency_report(c, 0).total_flops(), total);
  EXPECT_EQ(efficiency_report(c, 0).at("ms_fusion").flops, 0);
}

TEST(CountFlops, DecoderFlopsFromComponents) {
  const DecoderConfig dc;
  const std::int64_t n = 64 + 4, d = 64, h = 128;
  const std::int64_t block = flops::attention(n, n, d) + 2 * n * d * h + 2 * n * h * d;
  EXPECT_EQ(mask_decoder_flops(dc, d, 64, 4), 2 * block + 2 * 64 * d * 4);
}

// ---------------------------------------------------------------- timing

TEST(Timing, UsesWarmupsAndAtLeastTwentyTimedRuns) {
  int calls = 0;
  const double ms = median_of_means_ms([&] { ++calls; });
  EXPECT_EQ(calls, 3 + timed_runs());
  EXPECT_GE(timed_runs(), 20);
  EXPECT_GE(ms, 0.0);
}

TEST(Timing, ReportTotalsAreModuleSums) {
  ModelConfig c = test::small_config();
  const Sample s = generate_sample(test::small_gen(), 1);
  const auto r = efficiency_report(c, 0, &s);
  ASSERT_TRUE(r.timed);
  double sum = 0;
  for (const auto& m : r.modules) {
    EXPECT_GE(m.ms, 0.0);
    sum += m.ms;
  }
  EXPECT_DOUBLE_EQ(r.total_ms(), sum);
  EXPECT_GT(r.at("encoder").ms, 0.0);
}

}  // namespace
}  // namespace geoadapt
