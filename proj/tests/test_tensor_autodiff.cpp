// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "test_util.hpp"

namespace geoadapt {
namespace {

using test::Mat;

template <typename T>
struct Graph {
  Tape<T> tape;
  Var<T> c(const BasicTensor<T>& t) { return tape.constant(t); }
};

Tensor make(Shape s, std::vector<float> v) { return Tensor(std::move(s), std::move(v)); }

// ---------------------------------------------------------------- matmul

TEST(Matmul, IdentityTimesMatrix) {
  Graph<float> g;
  auto y = ops::matmul(g.c(make({2, 2}, {1, 0, 0, 1})), g.c(make({2, 2}, {3, 4, 5, 6})));
  EXPECT_EQ(y.value().storage(), (std::vector<float>{3, 4, 5, 6}));
}

TEST(Matmul, RowTimesColumn) {
  Graph<float> g;
  auto y = ops::matmul(g.c(make({1, 2}, {1, 2})), g.c(make({2, 1}, {3, 4})));
  ASSERT_EQ(y.shape(), (Shape{1, 1}));
  EXPECT_EQ(y.value()[0], 11.0f);
}

TEST(Matmul, MatchesTripleLoopReference) {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    Graph<float> g;
    const Tensor a = test::random_tensor({4, 5}, rng), b = test::random_tensor({5, 3}, rng);
    const auto y = ops::matmul(g.c(a), g.c(b));
    const Mat ref = test::ref_matmul(test::to_mat(a), test::to_mat(b));
    EXPECT_LT(test::max_abs_diff(test::to_vec(y.value()), ref.v), 1e-6);
  }
}

TEST(Matmul, TransposedVariantMatchesReference) {
  Rng rng(12);
  Graph<float> g;
  const Tensor a = test::random_tensor({3, 4}, rng), b = test::random_tensor({5, 4}, rng);
  const auto y = ops::matmul_nt(g.c(a), g.c(b));
  Mat bt(4, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) bt(j, i) = b[i * 4 + j];
  EXPECT_LT(test::max_abs_diff(test::to_vec(y.value()), test::ref_matmul(test::to_mat(a), bt).v), 1e-6);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Graph<float> g;
  try {
    ops::matmul(g.c(Tensor({2, 3})), g.c(Tensor({4, 2})));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("[2x3]"), std::string::npos) << m;
    EXPECT_NE(m.find("[4x2]"), std::string::npos) << m;
  }
}

// ---------------------------------------------------------------- sigmoid

TEST(Sigmoid, ZeroMapsToHalf) {
  Graph<float> g;
  EXPECT_EQ(ops::sigmoid(g.c(make({1}, {0}))).value()[0], 0.5f);
}

TEST(Sigmoid, SaturatesWithoutOverflow) {
  Graph<double> g;
  const double y = ops::sigmoid(g.c(BasicTensor<double>({2}, {50.0, -800.0}))).value()[0];
  EXPECT_GT(y, 1.0 - 1e-9);
  EXPECT_LE(y, 1.0);
  Graph<float> gf;
  const auto v = ops::sigmoid(gf.c(make({2}, {50.0f, -800.0f}))).value();
  EXPECT_TRUE(v.all_finite());
  EXPECT_EQ(v[1], 0.0f);
}

TEST(Sigmoid, SymmetricPairsSumToOne) {
  Rng rng(3);
  Graph<float> g;
  Tensor x = test::random_tensor({32}, rng, -8, 8), nx = x;
  for (auto& v : nx.values()) v = -v;
  const auto a = ops::sigmoid(g.c(x)).value(), b = ops::sigmoid(g.c(nx)).value();
  for (std::int64_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(a[i] + b[i], 1.0f, 1e-6);
    EXPECT_GT(a[i], 0.0f);
    EXPECT_LT(a[i], 1.0f);
  }
}

// ---------------------------------------------------------------- softmax

TEST(Softmax, UniformInput) {
  Graph<float> g;
  const auto y = ops::softmax(g.c(make({1, 3}, {0, 0, 0})), 1).value();
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(y[i], 1.0f / 3.0f, 1e-7);
}

TEST(Softmax, ShiftInvariant) {
  Rng rng(4);
  Graph<float> g;
  Tensor x = test::random_tensor({4, 6}, rng, -3, 3), xs = x;
  for (auto& v : xs.values()) v += 17.25f;
  const auto a = ops::softmax(g.c(x), 1).value(), b = ops::softmax(g.c(xs), 1).value();
  for (std::int64_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-6);
}

TEST(Softmax, MatchesFrozenReference) {
  // Independent double-precision evaluation of exp(x_i) / sum_j exp(x_j).
  const double ref[3] = {0.09003057317038045, 0.2447284710547976, 0.6652409557748218};
  Graph<float> g;
  const auto y = ops::softmax(g.c(make({3}, {1, 2, 3})), 0).value();
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(y[i], ref[i], 1e-6);
}

TEST(Softmax, RowsSumToOneAlongEitherAxis) {
  Rng rng(5);
  Graph<float> g;
  const Tensor x = test::random_tensor({5, 7}, rng, -20, 20);
  const auto r = ops::softmax(g.c(x), 1).value();
  for (int i = 0; i < 5; ++i) {
    double s = 0;
    for (int j = 0; j < 7; ++j) s += r[i * 7 + j];
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  const auto c = ops::softmax(g.c(x), 0).value();
  for (int j = 0; j < 7; ++j) {
    double s = 0;
    for (int i = 0; i < 5; ++i) s += c[i * 7 + j];
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Softmax, LargeLogitsStayFinite) {
  Graph<float> g;
  EXPECT_TRUE(ops::softmax(g.c(make({1, 3}, {1000, 999, -1000})), 1).value().all_finite());
}

// ---------------------------------------------------------------- conv2d

TEST(Conv2d, UnitKernelIsIdentity) {
  Rng rng(6);
  Graph<float> g;
  const Tensor x = test::random_tensor({1, 5, 6}, rng);
  const auto y = ops::conv2d(g.c(x), g.c(Tensor({1, 1, 1, 1}, 1.0f)), std::optional<Var<float>>{}, 1, 0);
  EXPECT_TRUE(y.value().bit_equal(x));
}

TEST(Conv2d, OnesKernelOnOnesInput) {
  Graph<float> g;
  const auto y = ops::conv2d(g.c(Tensor({1, 5, 5}, 1.0f)), g.c(Tensor({1, 1, 3, 3}, 1.0f)), std::optional<Var<float>>{}, 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 3, 3}));
  for (float v : y.value().values()) EXPECT_EQ(v, 9.0f);
}

TEST(Conv2d, MatchesSixLoopReference) {
  Rng rng(7);
  struct Case {
    std::int64_t ci, h, w, co, k, stride, pad;
  };
  for (const Case c : {Case{2, 7, 6, 3, 3, 1, 1}, Case{3, 9, 9, 4, 3, 2, 1}, Case{1, 8, 8, 2, 2, 2, 0},
                       Case{3, 16, 16, 5, 8, 8, 0}}) {
    Graph<float> g;
    const Tensor x = test::random_tensor({c.ci, c.h, c.w}, rng), w = test::random_tensor({c.co, c.ci, c.k, c.k}, rng),
                 b = test::random_tensor({c.co}, rng);
    const auto y = ops::conv2d(g.c(x), g.c(w), std::optional{g.c(b)}, c.stride, c.pad);
    std::int64_t oh, ow;
    const auto ref = test::ref_conv(test::to_vec(x), c.ci, c.h, c.w, test::to_vec(w), c.co, c.k, c.k,
                                    test::to_vec(b), c.stride, c.pad, &oh, &ow);
    ASSERT_EQ(y.shape(), (Shape{c.co, oh, ow}));
    EXPECT_LT(test::max_abs_diff(test::to_vec(y.value()), ref), 1e-5);
  }
}

TEST(Conv2d, KernelLargerThanPaddedInputIsDimensionError) {
  Graph<float> g;
  EXPECT_THROW(ops::conv2d(g.c(Tensor({1, 2, 2})), g.c(Tensor({1, 1, 5, 5})), std::optional<Var<float>>{}, 1, 1), DimensionError);
  EXPECT_THROW(ops::conv2d(g.c(Tensor({2, 4, 4})), g.c(Tensor({1, 3, 3, 3})), std::optional<Var<float>>{}, 1, 1), DimensionError);
}

// ----------------------------------------------------------- bilinear_resize

TEST(Bilinear, ConstantImageStaysConstant) {
  Graph<float> g;
  for (auto [h, w] : {std::pair{3, 5}, std::pair{16, 16}, std::pair{1, 1}, std::pair{7, 2}}) {
    const auto y = ops::bilinear_resize(g.c(Tensor({2, 4, 4}, 0.375f)), h, w).value();
    for (float v : y.values()) EXPECT_NEAR(v, 0.375f, 1e-6);
  }
}

TEST(Bilinear, SameSizeIsIdentity) {
  Rng rng(8);
  Graph<float> g;
  const Tensor x = test::random_tensor({3, 5, 4}, rng);
  EXPECT_TRUE(ops::bilinear_resize(g.c(x), 5, 4).value().bit_equal(x));
}

TEST(Bilinear, TwoByTwoToFourByFourTable) {
  // Half-pixel-centre interpolation table for corners 1 2 / 3 4, evaluated
  // independently (align_corners = false).
  const float table[16] = {1.0f, 1.25f, 1.75f, 2.0f, 1.5f, 1.75f, 2.25f, 2.5f,
                           2.5f, 2.75f, 3.25f, 3.5f, 3.0f, 3.25f, 3.75f, 4.0f};
  Graph<float> g;
  const auto y = ops::bilinear_resize(g.c(make({1, 2, 2}, {1, 2, 3, 4})), 4, 4).value();
  for (int i = 0; i < 16; ++i) EXPECT_NEAR(y[i], table[i], 1e-6) << i;
}

TEST(Bilinear, ZeroTargetIsRejected) {
  Graph<float> g;
  EXPECT_THROW(ops::bilinear_resize(g.c(Tensor({1, 2, 2})), 0, 2), DimensionError);
}

// --------------------------------------------------------------- backward

TEST(Backward, SumGivesOnes) {
  ParameterSet<float> ps;
  Rng rng(9);
  ps.add("w", test::random_tensor({3, 4}, rng), false);
  Tape<float> t;
  Binder<float> b(t, ps);
  const auto g = t.backward(ops::sum(b("w")));
  for (float v : g.at("w").values()) EXPECT_EQ(v, 1.0f);
}

TEST(Backward, HalfSquaredNormGivesW) {
  ParameterSet<float> ps;
  Rng rng(10);
  ps.add("w", test::random_tensor({5}, rng), false);
  Tape<float> t;
  Binder<float> b(t, ps);
  const auto g = t.backward(ops::scale(ops::sum(ops::mul(b("w"), b("w"))), 0.5f));
  for (int i = 0; i < 5; ++i) EXPECT_FLOAT_EQ(g.at("w")[i], ps.value("w")[i]);
}

TEST(Backward, NonScalarLossIsContractViolation) {
  ParameterSet<float> ps;
  ps.add("w", Tensor({2}, 1.0f), false);
  Tape<float> t;
  Binder<float> b(t, ps);
  EXPECT_THROW(t.backward(b("w")), ContractError);
}

TEST(Backward, FrozenParametersGetNoEntry) {
  ParameterSet<float> ps;
  ps.add("frozen/a", Tensor({2}, 1.0f), true);
  ps.add("b", Tensor({2}, 2.0f), false);
  Tape<float> t;
  Binder<float> b(t, ps);
  const auto g = t.backward(ops::sum(ops::mul(b("frozen/a"), b("b"))));
  EXPECT_EQ(g.count("frozen/a"), 0u);
  ASSERT_EQ(g.count("b"), 1u);
  EXPECT_EQ(g.at("b")[0], 1.0f);
}

TEST(Backward, RepeatedUseAccumulatesIntoOneGradient) {
  ParameterSet<float> ps;
  ps.add("w", Tensor({1}, 3.0f), false);
  Tape<float> t;
  Binder<float> b(t, ps);
  // w*w + w -> 2w + 1 = 7
  const auto g = t.backward(ops::sum(ops::add(ops::mul(b("w"), b("w")), b("w"))));
  EXPECT_FLOAT_EQ(g.at("w")[0], 7.0f);
}

TEST(Tape, TopologicalOrderAndSingleVisit) {
  Rng rng(13);
  ModelState s;
  const ModelConfig cfg = test::small_config();
  init_mask_decoder(s, cfg.decoder, cfg.encoder.dim, rng);
  Tape<float> t;
  Binder<float> b(t, s);
  const TokenGrid<float> grid{t.constant(test::random_tensor({16, 64}, rng)), 4, 4};
  const auto logits = decode(b, cfg.decoder, grid, std::optional{t.constant(test::random_tensor({4, 64}, rng))}, 32, 32);
  std::vector<int> labels(32 * 32, 1);
  const auto loss = ops::cross_entropy(logits, std::span<const int>(labels));
  for (std::size_t id = 0; id < t.size(); ++id) {
    // Inputs precede their consumers.
    for (std::size_t k = 0;; ++k) {
      int in;
      try {
        in = t.input_id(static_cast<int>(id), k);
      } catch (const std::out_of_range&) {
        break;
      }
      EXPECT_LT(in, static_cast<int>(id));
    }
  }
  t.backward(loss);
  std::size_t reachable = 0;
  for (std::size_t id = 0; id < t.size(); ++id) {
    EXPECT_LE(t.visit_counts()[id], 1) << "node " << id;
    reachable += t.visit_counts()[id];
  }
  EXPECT_EQ(reachable, t.backward_visits());
  EXPECT_GT(reachable, 50u);
}

TEST(Forward, FiniteOutputsOnBoundedInputs) {
  Rng rng(14);
  ModelState s = init_model(test::small_config(), 3);
  const Sample sample = generate_sample(test::small_gen(), 5);
  Tape<float> t;
  Binder<float> b(t, s);
  LiveSource<float> src(test::small_config(), sample);
  EXPECT_TRUE(forward_logits(b, test::small_config(), src).value().all_finite());
}

// ------------------------------------------------------------- gradcheck

// Wraps a small op graph over named inputs into a gradcheck run.
GradcheckReport check_graph(const std::string& name, std::vector<std::pair<std::string, Shape>> inputs,
                            const std::function<Var<double>(Binder<double>&)>& f, std::uint64_t seed = 1,
                            double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  ParameterSet<double> ps;
  for (auto& [n, s] : inputs) ps.add(n, test::random_tensor_t<double>(s, rng, lo, hi), false);
  GradcheckOptions opt;
  opt.max_coords = 0;
  opt.h = 1e-6;
  return gradcheck<double>(name, ps, f, opt);
}

// Scalar readout with distinct per-element sensitivities.
Var<double> readout(Binder<double>& p, Var<double> y) {
  const std::int64_t n = y.value().size();
  BasicTensor<double> w(y.shape());
  for (std::int64_t i = 0; i < n; ++i) w[i] = std::sin(1.0 + 0.37 * double(i));
  return ops::sum(ops::mul(y, p.tape().constant(w)));
}

TEST(Gradcheck, EveryPrimitive) {
  using namespace ops;
  using B = Binder<double>;
  struct Case {
    const char* name;
    std::vector<std::pair<std::string, Shape>> in;
    std::function<Var<double>(B&)> f;
    double lo = -1, hi = 1;
  };
  std::vector<Case> cases = {
      {"matmul", {{"a", {3, 4}}, {"b", {4, 2}}}, [](B& p) { return readout(p, matmul(p("a"), p("b"))); }},
      {"matmul_nt", {{"a", {3, 4}}, {"b", {5, 4}}}, [](B& p) { return readout(p, matmul_nt(p("a"), p("b"))); }},
      {"linear", {{"x", {3, 4}}, {"w", {4, 5}}, {"b", {5}}},
       [](B& p) { return readout(p, linear(p("x"), p("w"), std::optional{p("b")})); }},
      {"add", {{"a", {2, 3}}, {"b", {2, 3}}}, [](B& p) { return readout(p, add(p("a"), p("b"))); }},
      {"sub", {{"a", {2, 3}}, {"b", {2, 3}}}, [](B& p) { return readout(p, sub(p("a"), p("b"))); }},
      {"mul", {{"a", {2, 3}}, {"b", {2, 3}}}, [](B& p) { return readout(p, mul(p("a"), p("b"))); }},
      {"scale", {{"a", {6}}}, [](B& p) { return readout(p, scale(p("a"), 2.5)); }},
      {"rsub_scalar", {{"a", {6}}}, [](B& p) { return readout(p, rsub_scalar(1.0, p("a"))); }},
      {"sigmoid", {{"a", {8}}}, [](B& p) { return readout(p, sigmoid(p("a"))); }, -4, 4},
      {"relu", {{"a", {8}}}, [](B& p) { return readout(p, relu(p("a"))); }, 0.1, 1},
      {"gelu", {{"a", {8}}}, [](B& p) { return readout(p, gelu(p("a"))); }, -3, 3},
      {"softmax_rows", {{"a", {3, 5}}}, [](B& p) { return readout(p, softmax_rows(p("a"))); }},
      {"softmax_cols", {{"a", {3, 5}}}, [](B& p) { return readout(p, softmax(p("a"), 0)); }},
      {"layer_norm", {{"x", {3, 6}}, {"g", {6}}, {"b", {6}}},
       [](B& p) { return readout(p, layer_norm(p("x"), p("g"), p("b"))); }},
      {"concat0", {{"a", {2, 3}}, {"b", {1, 3}}},
       [](B& p) { return readout(p, concat(std::vector<Var<double>>{p("a"), p("b")}, 0)); }},
      {"concat1", {{"a", {2, 3}}, {"b", {2, 2}}},
       [](B& p) { return readout(p, concat(std::vector<Var<double>>{p("a"), p("b")}, 1)); }},
      {"slice", {{"a", {4, 5}}}, [](B& p) { return readout(p, slice(p("a"), 1, 1, 3)); }},
      {"reshape", {{"a", {2, 6}}}, [](B& p) { return readout(p, reshape(p("a"), Shape{3, 4})); }},
      {"transpose", {{"a", {2, 5}}}, [](B& p) { return readout(p, transpose(p("a"))); }},
      {"tokens_to_map", {{"a", {6, 3}}}, [](B& p) { return readout(p, tokens_to_map(p("a"), 2, 3)); }},
      {"map_to_tokens", {{"a", {3, 2, 3}}}, [](B& p) { return readout(p, map_to_tokens(p("a"))); }},
      {"conv2d", {{"x", {2, 6, 5}}, {"w", {3, 2, 3, 3}}, {"b", {3}}},
       [](B& p) { return readout(p, conv2d(p("x"), p("w"), std::optional{p("b")}, 2, 1)); }},
      {"bilinear_up", {{"x", {2, 3, 4}}}, [](B& p) { return readout(p, bilinear_resize(p("x"), 7, 5)); }},
      {"bilinear_down", {{"x", {2, 8, 8}}}, [](B& p) { return readout(p, bilinear_resize(p("x"), 3, 4)); }},
      {"mean_rows", {{"a", {4, 3}}}, [](B& p) { return readout(p, mean_rows(p("a"))); }},
      {"group_mean", {{"a", {6, 3}}}, [](B& p) { return readout(p, group_mean(p("a"), 3)); }},
      {"sum", {{"a", {4, 3}}}, [](B& p) { return scale(sum(p("a")), 0.7); }},
      {"mean", {{"a", {4, 3}}}, [](B& p) { return scale(mean(p("a")), 0.7); }},
  };
  for (const auto& c : cases) {
    const auto r = check_graph(c.name, c.in, c.f, 2, c.lo, c.hi);
    EXPECT_LT(r.max_rel_error, 1e-3) << c.name << " worst " << r.worst_param;
  }
}

TEST(Gradcheck, CrossEntropy) {
  std::vector<int> labels{0, 2, 1, 3, 3, 0};
  const auto r = check_graph("ce", {{"z", {4, 2, 3}}}, [&](Binder<double>& p) {
    return ops::cross_entropy(p("z"), std::span<const int>(labels));
  });
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Gradcheck, LinearLayerBelow1e4) {
  const auto r = check_graph("linear", {{"x", {4, 6}}, {"w", {6, 3}}, {"b", {3}}}, [](Binder<double>& p) {
    return readout(p, ops::linear(p("x"), p("w"), std::optional{p("b")}));
  });
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Gradcheck, SigmoidChainBelow1e4) {
  const auto r = check_graph("sigmoid-chain", {{"x", {10}}}, [](Binder<double>& p) {
    return readout(p, ops::sigmoid(ops::scale(ops::sigmoid(ops::scale(ops::sigmoid(p("x")), 3.0)), -2.0)));
  });
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Gradcheck, CompositeChainAtCoarseStep) {
  // h = 1e-3 through layer norm, attention, GELU and a residual: at least 95%
  // of coordinates within 1e-3 relative.
  Rng rng(21);
  ParameterSet<double> s;
  const std::int64_t d = 16;
  s.add("attn/q/w", test::random_tensor_t<double>({d, d}, rng, -0.25, 0.25), false);
  s.add("attn/q/b", test::random_tensor_t<double>({d}, rng, -0.1, 0.1), false);
  s.add("attn/k/w", test::random_tensor_t<double>({d, d}, rng, -0.25, 0.25), false);
  s.add("attn/v/w", test::random_tensor_t<double>({d, d}, rng, -0.25, 0.25), false);
  s.add("attn/v/b", test::random_tensor_t<double>({d}, rng, -0.1, 0.1), false);
  s.add("attn/o/w", test::random_tensor_t<double>({d, d}, rng, -0.25, 0.25), false);
  s.add("attn/o/b", test::random_tensor_t<double>({d}, rng, -0.1, 0.1), false);
  s.add("x", test::random_tensor_t<double>({6, d}, rng), false);
  s.add("g", BasicTensor<double>({d}, 1.0), false);
  s.add("b", BasicTensor<double>({d}, 0.0), false);
  GradcheckOptions opt;
  opt.h = 1e-3;
  opt.max_coords = 0;
  const auto r = gradcheck<double>("chain", s, [&](Binder<double>& p) {
    auto h = ops::layer_norm(p("x"), p("g"), p("b"));
    auto a = multi_head_attention(p, "attn", h, h, 2).out;
    return readout(p, ops::gelu(ops::add(a, p("x"))));
  }, opt);
  EXPECT_GE(r.fraction_below(1e-3), 0.95) << "max " << r.max_rel_error;
}

TEST(Gradcheck, FullModelOnSmallSample) {
  GradcheckOptions opt;
  opt.max_coords = 6;
  const auto r = run_gradcheck("e2e", opt);
  EXPECT_LT(r.max_rel_error, 1e-2) << r.worst_param;
}

TEST(Gradcheck, RelativeErrorDefinition) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1e-9, 0.0), 1e-9 / 1e-8);
}

TEST(Gradcheck, NondeterministicForwardIsReproducibilityError) {
  ParameterSet<double> ps;
  ps.add("w", BasicTensor<double>({2}, 1.0), false);
  int calls = 0;
  EXPECT_THROW(gradcheck<double>("flaky", ps, [&](Binder<double>& p) {
    return ops::scale(ops::sum(p("w")), 1.0 + 1e-3 * double(++calls));
  }, GradcheckOptions{}), ReproducibilityError);
}

TEST(Gradcheck, RejectsNonPositiveStep) {
  ParameterSet<double> ps;
  ps.add("w", BasicTensor<double>({1}, 1.0), false);
  GradcheckOptions opt;
  opt.h = 0;
  EXPECT_THROW(gradcheck<double>("h0", ps, [](Binder<double>& p) { return ops::sum(p("w")); }, opt), ConfigError);
}

TEST(Gradcheck, CorruptedBackwardRuleIsCaught) {
  testing::ScopedFault fault("sigmoid", 1.25);
  const auto r = check_graph("sigmoid", {{"a", {8}}}, [](Binder<double>& p) { return readout(p, ops::sigmoid(p("a"))); });
  EXPECT_FALSE(r.pass());
  EXPECT_GT(r.max_rel_error, 0.1);
}

// -------------------------------------------------------------------- TSR

TEST(Tsr, FloatRoundTripIsBitExact) {
  const auto dir = test::scratch_dir("tsr_f32");
  Rng rng(15);
  Tensor t = test::random_tensor({3, 5, 7}, rng, -1e3, 1e3);
  t[0] = -0.0f;
  t[1] = 1e-38f;
  save_tsr(dir / "a.tsr", t);
  EXPECT_TRUE(load_tsr(dir / "a.tsr").bit_equal(t));
  const auto bytes = io::read_file(dir / "a.tsr");
  ASSERT_EQ(bytes.size(), 4u + 1 + 1 + 3 * 4 + 105 * 4);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "TSR1");
  EXPECT_EQ(bytes[4], 0);
  EXPECT_EQ(bytes[5], 3);
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 3u);  // little-endian u32 extent 3
  EXPECT_EQ(bytes[7], 0);
}

TEST(Tsr, ByteRoundTrip) {
  const auto dir = test::scratch_dir("tsr_u8");
  std::vector<int> v{0, 1, 2, 3, 255, 7};
  save_tsr_u8(dir / "l.tsr", {2, 3}, v);
  Shape s;
  EXPECT_EQ(load_tsr_u8(dir / "l.tsr", &s), v);
  EXPECT_EQ(s, (Shape{2, 3}));
  EXPECT_THROW(load_tsr(dir / "l.tsr"), FormatError);
  EXPECT_THROW(save_tsr_u8(dir / "bad.tsr", {1}, {300}), DataError);
}

TEST(Tsr, MalformedFilesAreFormatErrors) {
  const auto dir = test::scratch_dir("tsr_bad");
  save_tsr(dir / "a.tsr", Tensor({4, 4}, 1.0f));
  auto bytes = io::read_file(dir / "a.tsr");
  for (std::size_t cut : {std::size_t(2), std::size_t(5), std::size_t(9), bytes.size() - 1}) {
    io::write_file(dir / "cut.tsr", std::vector<char>(bytes.begin(), bytes.begin() + std::ptrdiff_t(cut)));
    EXPECT_THROW(load_tsr(dir / "cut.tsr"), FormatError) << cut;
  }
  auto magic = bytes;
  magic[0] = 'X';
  io::write_file(dir / "magic.tsr", magic);
  EXPECT_THROW(load_tsr(dir / "magic.tsr"), FormatError);
  auto dtype = bytes;
  dtype[4] = 9;
  io::write_file(dir / "dtype.tsr", dtype);
  EXPECT_THROW(load_tsr(dir / "dtype.tsr"), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  io::write_file(dir / "extra.tsr", extra);
  EXPECT_THROW(load_tsr(dir / "extra.tsr"), FormatError);
}

TEST(TensorType, ShapeAndDataAgree) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<float>(5)), DimensionError);
  EXPECT_THROW(Tensor({2, 0}), DimensionError);
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6);
  EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
}

}  // namespace
}  // namespace geoadapt
