// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace geoadapt {
namespace {

struct Fixture {
  ModelState s;
  Tape<float> tape;
  Fixture(std::int64_t d = 64, std::uint64_t seed = 1) {
    Rng rng(seed);
    init_terrain_adapter(s, AdapterConfig{}, d, rng);
  }
};

TEST(EncodeDem, GridMatchesImageGrid) {
  Fixture f;
  Binder<float> b(f.tape, f.s);
  Rng rng(2);
  const auto g = encode_dem(b, f.tape.constant(test::random_tensor({1, 64, 64}, rng)), 8, 8, 8);
  EXPECT_EQ(g.h, 8);
  EXPECT_EQ(g.w, 8);
  EXPECT_EQ(g.tokens.shape(), (Shape{64, 64}));
  const auto half = encode_dem(b, f.tape.constant(test::random_tensor({1, 32, 32}, rng)), 8, 4, 4);
  EXPECT_EQ(half.tokens.dim(0), 16);
}

TEST(EncodeDem, ZeroDemGivesConstantBiasResponse) {
  Fixture f;
  Rng rng(3);
  f.s.value("ta_adapter/dem_proj/b") = test::random_tensor({64}, rng);
  Binder<float> b(f.tape, f.s);
  const auto g = encode_dem(b, f.tape.constant(Tensor({1, 64, 64}, 0.0f)), 8, 8, 8);
  const auto& bias = f.s.value("ta_adapter/dem_proj/b");
  for (std::int64_t t = 0; t < 64; ++t)
    for (std::int64_t c = 0; c < 64; ++c) ASSERT_EQ(g.tokens.value()[t * 64 + c], bias[c]);
}

// Three stride-2 conv+ReLU layers then the stride-matching projection,
// composed from the naive loop convolution.
std::vector<double> naive_dem_encoder(const ModelState& s, const Tensor& dem, std::int64_t k) {
  std::vector<double> x = test::to_vec(dem);
  std::int64_t c = 1, h = dem.dim(1), w = dem.dim(2);
  for (int l = 0; l < 3; ++l) {
    const std::string pre = "ta_adapter/dem_conv" + std::to_string(l);
    const auto& wt = s.value(pre + "/w");
    std::int64_t oh, ow;
    x = test::ref_conv(x, c, h, w, test::to_vec(wt), wt.dim(0), 3, 3, test::to_vec(s.value(pre + "/b")), 2, 1,
                       &oh, &ow);
    for (auto& v : x) v = std::max(v, 0.0);
    c = wt.dim(0), h = oh, w = ow;
  }
  const auto& pw = s.value("ta_adapter/dem_proj/w");
  std::int64_t oh, ow;
  auto y = test::ref_conv(x, c, h, w, test::to_vec(pw), pw.dim(0), k, k, test::to_vec(s.value("ta_adapter/dem_proj/b")),
                          k, 0, &oh, &ow);
  // [d x oh x ow] -> tokens [oh*ow x d]
  std::vector<double> tok(y.size());
  const std::int64_t d = pw.dim(0), n = oh * ow;
  for (std::int64_t ch = 0; ch < d; ++ch)
    for (std::int64_t t = 0; t < n; ++t) tok[std::size_t(t * d + ch)] = y[std::size_t(ch * n + t)];
  return tok;
}

TEST(EncodeDem, MatchesNaiveConvComposition) {
  for (std::uint64_t seed : {4u, 5u, 6u}) {
    Fixture f(64, seed);
    Rng rng(seed);
    for (int l = 0; l < 3; ++l) {
      auto& bias = f.s.value("ta_adapter/dem_conv" + std::to_string(l) + "/b");
      bias = test::random_tensor(bias.shape(), rng, -0.2, 0.2);
    }
    const Tensor dem = normalize_dem(test::random_tensor({1, 64, 64}, rng, -3, 3));
    Binder<float> b(f.tape, f.s);
    const auto g = encode_dem(b, f.tape.constant(dem), 8, 8, 8);
    EXPECT_LT(test::max_abs_diff(test::to_vec(g.tokens.value()), naive_dem_encoder(f.s, dem, 1)), 1e-4);
  }
}

TEST(EncodeDem, LargerPatchUsesStridedProjection) {
  ModelState s;
  Rng rng(7);
  init_terrain_adapter(s, AdapterConfig{}, 32, rng);
  // Patch 16 needs a 2x2 stride-2 projection; re-draw it at that size.
  s.entries().erase("ta_adapter/dem_proj/w");
  s.add("ta_adapter/dem_proj/w", test::random_tensor({32, 16, 2, 2}, rng, -0.3, 0.3), false);
  Tape<float> t;
  Binder<float> b(t, s);
  const Tensor dem = test::random_tensor({1, 64, 64}, rng);
  const auto g = encode_dem(b, t.constant(dem), 16, 4, 4);
  EXPECT_EQ(g.tokens.shape(), (Shape{16, 32}));
  EXPECT_LT(test::max_abs_diff(test::to_vec(g.tokens.value()), naive_dem_encoder(s, dem, 2)), 1e-4);
  EXPECT_EQ(terrain_adapter_param_count(AdapterConfig{}, 32, 16), s.count(false));
}

TEST(EncodeDem, GridMismatchIsConfigError) {
  Fixture f;
  Binder<float> b(f.tape, f.s);
  EXPECT_THROW(encode_dem(b, f.tape.constant(Tensor({1, 64, 64})), 8, 4, 4), ConfigError);
  EXPECT_THROW(encode_dem(b, f.tape.constant(Tensor({1, 64, 64})), 16, 4, 4), ConfigError);
  EXPECT_THROW(encode_dem(b, f.tape.constant(Tensor({2, 64, 64})), 8, 8, 8), DimensionError);
}

TokenGrid<float> grid(Tape<float>& t, const Tensor& v, std::int64_t h, std::int64_t w) {
  return TokenGrid<float>{t.constant(v), h, w};
}

TEST(GatedFuse, StronglyNegativeBiasReturnsImageTokens) {
  Fixture f(8);
  f.s.value("ta_adapter/gate/b") = Tensor({8}, -50.0f);
  Rng rng(8);
  const Tensor fe = test::random_tensor({4, 8}, rng), fi = test::random_tensor({4, 8}, rng);
  Binder<float> b(f.tape, f.s);
  const auto out = gated_fuse(b, grid(f.tape, fe, 2, 2), grid(f.tape, fi, 2, 2)).tokens.value();
  EXPECT_LT(test::max_abs_diff(test::to_vec(out), test::to_vec(fi)), 1e-6);
}

TEST(GatedFuse, StronglyPositiveBiasReturnsDemTokens) {
  Fixture f(8);
  f.s.value("ta_adapter/gate/b") = Tensor({8}, 50.0f);
  Rng rng(9);
  const Tensor fe = test::random_tensor({4, 8}, rng), fi = test::random_tensor({4, 8}, rng);
  Binder<float> b(f.tape, f.s);
  const auto out = gated_fuse(b, grid(f.tape, fe, 2, 2), grid(f.tape, fi, 2, 2)).tokens.value();
  EXPECT_LT(test::max_abs_diff(test::to_vec(out), test::to_vec(fe)), 1e-6);
}

TEST(GatedFuse, EqualInputsAreAFixedPoint) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    Fixture f(8, 100 + trial);
    f.s.value("ta_adapter/gate/w") = test::random_tensor({16, 8}, rng, -5, 5);
    f.s.value("ta_adapter/gate/b") = test::random_tensor({8}, rng, -5, 5);
    const Tensor x = test::random_tensor({6, 8}, rng, -10, 10);
    Binder<float> b(f.tape, f.s);
    const auto out = gated_fuse(b, grid(f.tape, x, 2, 3), grid(f.tape, x, 2, 3)).tokens.value();
    for (std::int64_t i = 0; i < x.size(); ++i) ASSERT_NEAR(out[i], x[i], 1e-5 * (1 + std::abs(x[i])));
  }
}

TEST(GatedFuse, OutputLiesInsideElementwiseBounds) {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    Fixture f(8, 1000 + trial);
    f.s.value("ta_adapter/gate/b") = test::random_tensor({8}, rng, -3, 3);
    const Tensor fe = test::random_tensor({4, 8}, rng, -5, 5), fi = test::random_tensor({4, 8}, rng, -5, 5);
    Binder<float> b(f.tape, f.s);
    Var<float> gate;
    const auto out = gated_fuse(b, grid(f.tape, fe, 2, 2), grid(f.tape, fi, 2, 2), &gate).tokens.value();
    for (std::int64_t i = 0; i < out.size(); ++i) {
      ASSERT_GE(out[i], std::min(fe[i], fi[i]) - 1e-6f) << trial;
      ASSERT_LE(out[i], std::max(fe[i], fi[i]) + 1e-6f) << trial;
    }
    ASSERT_EQ(gate.shape(), (Shape{4, 8}));
  }
}

TEST(GatedFuse, GateIsSigmoidOfConcatenatedProjection) {
  Fixture f(8);
  Rng rng(12);
  const Tensor fe = test::random_tensor({4, 8}, rng), fi = test::random_tensor({4, 8}, rng);
  Binder<float> b(f.tape, f.s);
  Var<float> gate;
  const auto out = gated_fuse(b, grid(f.tape, fe, 2, 2), grid(f.tape, fi, 2, 2), &gate).tokens.value();
  test::Mat cat(4, 16);
  for (int t = 0; t < 4; ++t)
    for (int c = 0; c < 8; ++c) cat(t, c) = fe[t * 8 + c], cat(t, 8 + c) = fi[t * 8 + c];
  const auto z = test::ref_add_row(test::ref_matmul(cat, test::to_mat(f.s.value("ta_adapter/gate/w"))),
                                   test::to_mat(f.s.value("ta_adapter/gate/b")));
  for (int i = 0; i < 32; ++i) {
    const double g = 1.0 / (1.0 + std::exp(-z.v[std::size_t(i)]));
    EXPECT_NEAR(gate.value()[i], g, 1e-6);
    EXPECT_NEAR(out[i], g * fe[i] + (1 - g) * fi[i], 1e-6);
  }
}

TEST(GatedFuse, WidthMismatchIsDimensionError) {
  Fixture f(8);
  Binder<float> b(f.tape, f.s);
  EXPECT_THROW(gated_fuse(b, grid(f.tape, Tensor({4, 16}), 2, 2), grid(f.tape, Tensor({4, 8}), 2, 2)),
               DimensionError);
  EXPECT_THROW(gated_fuse(b, grid(f.tape, Tensor({6, 8}), 2, 3), grid(f.tape, Tensor({4, 8}), 2, 2)),
               DimensionError);
}

TEST(Gradcheck, AdapterModule) {
  const auto r = run_gradcheck("ta");
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst_param;
  EXPECT_TRUE(r.per_param.count("ta_adapter/gate/w"));
  EXPECT_TRUE(r.per_param.count("ta_adapter/dem_conv0/w"));
}

TEST(Gradcheck, GatedFuseWithRespectToBothInputs) {
  Rng rng(13);
  ParameterSet<double> ps;
  ps.add("fe", test::random_tensor_t<double>({4, 8}, rng), false);
  ps.add("fi", test::random_tensor_t<double>({4, 8}, rng), false);
  ps.add("ta_adapter/gate/w", test::random_tensor_t<double>({16, 8}, rng, -0.5, 0.5), false);
  ps.add("ta_adapter/gate/b", test::random_tensor_t<double>({8}, rng, -0.5, 0.5), false);
  GradcheckOptions opt;
  opt.max_coords = 0;
  const auto r = gradcheck<double>("gate", ps, [](Binder<double>& p) {
    const auto out = gated_fuse(p, TokenGrid<double>{p("fe"), 2, 2}, TokenGrid<double>{p("fi"), 2, 2});
    BasicTensor<double> w(out.tokens.shape());
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = std::cos(0.7 * double(i));
    return ops::sum(ops::mul(out.tokens, p.tape().constant(w)));
  }, opt);
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst_param;
  EXPECT_EQ(r.per_param.size(), 4u);
}

TEST(NormalizeDem, ZeroMeanUnitVariance) {
  Rng rng(14);
  Tensor dem = test::random_tensor({1, 16, 16}, rng, 100, 900);
  const auto n = normalize_dem(dem);
  double m = 0, v = 0;
  for (float x : n.values()) m += x;
  m /= double(n.size());
  for (float x : n.values()) v += (x - m) * (x - m);
  v /= double(n.size());
  EXPECT_NEAR(m, 0.0, 1e-5);
  EXPECT_NEAR(v, 1.0, 1e-4);
  const auto flat = normalize_dem(Tensor({1, 4, 4}, 7.0f));
  for (float x : flat.values()) EXPECT_EQ(x, 0.0f);
}

TEST(Adapter, ParameterCountMatchesState) {
  Fixture f;
  EXPECT_EQ(terrain_adapter_param_count(AdapterConfig{}, 64, 8), f.s.count(false));
  // conv stack (40 + 296 + 1168) + 1x1 projection (1088) + gate (8256)
  EXPECT_EQ(f.s.count(false), 40 + 296 + 1168 + 1088 + 8256);
}

}  // namespace
}  // namespace geoadapt
