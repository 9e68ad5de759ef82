#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "stconv/errors.hpp"
#include "stconv/ops.hpp"
#include "test_util.hpp"

namespace stconv {
namespace {

using testing::max_abs;
using testing::max_abs_diff;
using testing::random_array;

template <typename T>
NdArray<T> eval1(const NdArray<T>& x, const std::function<Var(Tape<T>&, Var)>& f) {
  Tape<T> tape(false);
  return tape.value(f(tape, tape.constant(x)));
}

// Direct nested-loop oracles, written independently of the optimized kernels.
NdArray<double> oracle_temporal(const NdArray<double>& x, const NdArray<double>& w, const NdArray<double>& b) {
  const std::size_t B = x.dim(0), C = x.dim(2), T = x.dim(3), K = w.dim(0), m = w.dim(3);
  NdArray<double> out({B, K, C, T - m + 1});
  for (std::size_t bi = 0; bi < B; ++bi)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t + m <= T; ++t) {
          double s = b[k];
          for (std::size_t tau = 0; tau < m; ++tau) s += x.at({bi, 0, c, t + tau}) * w.at({k, 0, 0, tau});
          out.at({bi, k, c, t}) = s;
        }
  return out;
}

NdArray<double> oracle_spatial(const NdArray<double>& h, const NdArray<double>& w, const NdArray<double>& b) {
  const std::size_t B = h.dim(0), K = h.dim(1), C = h.dim(2), T = h.dim(3), J = w.dim(0);
  NdArray<double> out({B, J, 1, T});
  for (std::size_t bi = 0; bi < B; ++bi)
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t t = 0; t < T; ++t) {
        double s = b[j];
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t c = 0; c < C; ++c) s += h.at({bi, k, c, t}) * w.at({j, k, c, 0});
        out.at({bi, j, 0, t}) = s;
      }
  return out;
}

NdArray<double> oracle_spatiotemporal(const NdArray<double>& x, const NdArray<double>& w,
                                      const NdArray<double>& b) {
  const std::size_t B = x.dim(0), C = x.dim(2), T = x.dim(3), K = w.dim(0), m = w.dim(3);
  NdArray<double> out({B, K, 1, T - m + 1});
  for (std::size_t bi = 0; bi < B; ++bi)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t t = 0; t + m <= T; ++t) {
        double s = b[k];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t tau = 0; tau < m; ++tau) s += x.at({bi, 0, c, t + tau}) * w.at({k, 0, c, tau});
        out.at({bi, k, 0, t}) = s;
      }
  return out;
}

template <typename T>
NdArray<T> conv_t(const NdArray<T>& x, const NdArray<T>& w, const NdArray<T>& b) {
  Tape<T> tape(false);
  return tape.value(ops::conv_temporal(tape, tape.constant(x), tape.constant(w), tape.constant(b)));
}
template <typename T>
NdArray<T> conv_s(const NdArray<T>& h, const NdArray<T>& w, const NdArray<T>& b) {
  Tape<T> tape(false);
  return tape.value(ops::conv_spatial(tape, tape.constant(h), tape.constant(w), tape.constant(b)));
}
template <typename T>
NdArray<T> conv_st(const NdArray<T>& x, const NdArray<T>& w, const NdArray<T>& b) {
  Tape<T> tape(false);
  return tape.value(ops::conv_spatiotemporal(tape, tape.constant(x), tape.constant(w), tape.constant(b)));
}

// Fused kernel/bias from temporal and spatial factors, computed in double.
template <typename T>
std::pair<NdArray<T>, NdArray<T>> fuse(const NdArray<T>& wt, const NdArray<T>& bt, const NdArray<T>& ws,
                                       const NdArray<T>& bs) {
  const std::size_t K = wt.dim(0), m = wt.dim(3), J = ws.dim(0), C = ws.dim(2);
  NdArray<T> w({J, 1, C, m}), b({J});
  for (std::size_t j = 0; j < J; ++j) {
    double bias = bs[j];
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t tau = 0; tau < m; ++tau) {
        double s = 0;
        for (std::size_t i = 0; i < K; ++i) s += double(ws.at({j, i, c, 0})) * double(wt.at({i, 0, 0, tau}));
        w.at({j, 0, c, tau}) = static_cast<T>(s);
      }
      for (std::size_t i = 0; i < K; ++i) bias += double(ws.at({j, i, c, 0})) * double(bt[i]);
    }
    b[j] = static_cast<T>(bias);
  }
  return {w, b};
}

TEST(ConvTemporal, DifferenceKernel) {
  NdArray<double> x({1, 1, 1, 4}, {1, 2, 3, 4});
  NdArray<double> w({1, 1, 1, 3}, {1, 0, -1});
  auto y = conv_t(x, w, NdArray<double>({1}));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_DOUBLE_EQ(y[0], -2.0);
  EXPECT_DOUBLE_EQ(y[1], -2.0);
}

TEST(ConvTemporal, UnitKernelIsIdentity) {
  auto x = random_array<double>({2, 1, 3, 7}, 1);
  auto y = conv_t(x, NdArray<double>({1, 1, 1, 1}, 1.0), NdArray<double>({1}));
  EXPECT_EQ(y.shape(), (Shape{2, 1, 3, 7}));
  EXPECT_EQ(max_abs_diff(x, y), 0.0);
}

TEST(ConvTemporal, ZeroInputGivesBias) {
  auto y = conv_t(NdArray<double>({2, 1, 3, 9}), random_array<double>({4, 1, 1, 3}, 2),
                  NdArray<double>({4}, {0.5, -1, 2, 3}));
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t t = 0; t < 7; ++t) EXPECT_EQ(y.at({1, k, c, t}), std::vector<double>({0.5, -1, 2, 3})[k]);
}

TEST(ConvTemporal, MatchesOracle) {
  auto x = random_array<double>({3, 1, 4, 20}, 3);
  auto w = random_array<double>({5, 1, 1, 6}, 4);
  auto b = random_array<double>({5}, 5);
  EXPECT_LT(max_abs_diff(conv_t(x, w, b), oracle_temporal(x, w, b)), 1e-13);
}

TEST(ConvTemporal, ShapeErrorsNameAxes) {
  auto b = NdArray<double>({2});
  try {
    conv_t(random_array<double>({1, 1, 2, 4}, 1), random_array<double>({2, 1, 1, 5}, 2), b);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("m"), std::string::npos);
  }
  EXPECT_THROW(conv_t(random_array<double>({1, 2, 2, 8}, 1), random_array<double>({2, 1, 1, 3}, 2), b),
               DimensionError);
  EXPECT_THROW(conv_t(random_array<double>({1, 1, 2, 8}, 1), random_array<double>({2, 1, 1, 3}, 2),
                      NdArray<double>({3})),
               DimensionError);
}

TEST(ConvSpatial, HandSummation) {
  // K=1, C=2: channels [1,2] and [3,4] averaged.
  NdArray<double> h({1, 1, 2, 2}, {1, 2, 3, 4});
  auto y = conv_s(h, NdArray<double>({1, 1, 2, 1}, {0.5, 0.5}), NdArray<double>({1}));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_DOUBLE_EQ(y[0], 2.0);
  EXPECT_DOUBLE_EQ(y[1], 3.0);
}

TEST(ConvSpatial, OneHotSelectsMap) {
  auto h = random_array<double>({2, 3, 4, 5}, 6);
  NdArray<double> w({1, 3, 4, 1});
  w.at({0, 2, 1, 0}) = 1.0;
  auto y = conv_s(h, w, NdArray<double>({1}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(y.at({b, 0, 0, t}), h.at({b, 2, 1, t}));
}

TEST(ConvSpatial, ZeroKernelBiasOne) {
  auto y = conv_s(random_array<double>({2, 3, 4, 5}, 7), NdArray<double>({2, 3, 4, 1}), NdArray<double>({2}, 1.0));
  for (double v : y.data()) EXPECT_EQ(v, 1.0);
}

TEST(ConvSpatial, MatchesOracleAndRejectsMismatch) {
  auto h = random_array<double>({2, 3, 4, 9}, 8);
  auto w = random_array<double>({5, 3, 4, 1}, 9);
  auto b = random_array<double>({5}, 10);
  EXPECT_LT(max_abs_diff(conv_s(h, w, b), oracle_spatial(h, w, b)), 1e-13);
  EXPECT_THROW(conv_s(h, random_array<double>({5, 3, 3, 1}, 9), b), DimensionError);
  EXPECT_THROW(conv_s(h, random_array<double>({5, 2, 4, 1}, 9), b), DimensionError);
}

TEST(ConvSpatiotemporal, PointwiseMix) {
  auto x = random_array<double>({1, 1, 2, 6}, 11);
  auto y = conv_st(x, NdArray<double>({1, 1, 2, 1}, {0.25, -2.0}), NdArray<double>({1}));
  for (std::size_t t = 0; t < 6; ++t) {
    EXPECT_NEAR(y.at({0, 0, 0, t}), 0.25 * x.at({0, 0, 0, t}) - 2.0 * x.at({0, 0, 1, t}), 1e-15);
  }
}

TEST(ConvSpatiotemporal, ZeroKernelZeroOutput) {
  auto y = conv_st(random_array<double>({2, 1, 3, 8}, 12), NdArray<double>({4, 1, 3, 3}), NdArray<double>({4}));
  EXPECT_EQ(max_abs(y), 0.0);
}

TEST(ConvSpatiotemporal, MatchesOracle) {
  auto x = random_array<double>({2, 1, 5, 30}, 13);
  auto w = random_array<double>({6, 1, 5, 7}, 14);
  auto b = random_array<double>({6}, 15);
  EXPECT_LT(max_abs_diff(conv_st(x, w, b), oracle_spatiotemporal(x, w, b)), 1e-13);
}

TEST(ConvSpatiotemporal, RankOneKernelEqualsComposition) {
  auto x = random_array<double>({2, 1, 3, 12}, 16);
  auto kt = random_array<double>({1, 1, 1, 4}, 17);
  auto ks = random_array<double>({1, 1, 3, 1}, 18);
  NdArray<double> kst({1, 1, 3, 4});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t tau = 0; tau < 4; ++tau) kst.at({0, 0, c, tau}) = ks[c] * kt[tau];
  NdArray<double> z({1});
  EXPECT_LT(max_abs_diff(conv_st(x, kst, z), conv_s(conv_t(x, kt, z), ks, z)), 1e-14);
}

// Property: the fused bank reproduces the composed pair for random shapes.
TEST(ConvProperty, CompositionIdentity64) {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t B = 1 + gen() % 3, C = 1 + gen() % 6, K = 1 + gen() % 6, J = 1 + gen() % 5;
    const std::size_t m = 1 + gen() % 8, T = m + gen() % 20;
    auto x = random_array<double>({B, 1, C, T}, gen());
    auto wt = random_array<double>({K, 1, 1, m}, gen());
    auto bt = random_array<double>({K}, gen());
    auto ws = random_array<double>({J, K, C, 1}, gen());
    auto bs = random_array<double>({J}, gen());
    auto [wf, bf] = fuse(wt, bt, ws, bs);
    auto composed = conv_s(conv_t(x, wt, bt), ws, bs);
    auto fused = conv_st(x, wf, bf);
    ASSERT_EQ(composed.shape(), fused.shape());
    EXPECT_LT(max_abs_diff(composed, fused), 1e-10) << "trial " << trial;
  }
}

TEST(ConvProperty, CompositionIdentity32) {
  std::mt19937_64 gen(77);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t C = 1 + gen() % 22, K = 1 + gen() % 12, m = 1 + gen() % 25, T = m + gen() % 40;
    auto x = random_array<float>({2, 1, C, T}, gen());
    auto wt = random_array<float>({K, 1, 1, m}, gen());
    auto bt = random_array<float>({K}, gen());
    auto ws = random_array<float>({K, K, C, 1}, gen());
    auto bs = random_array<float>({K}, gen());
    auto [wf, bf] = fuse(wt, bt, ws, bs);
    auto composed = conv_s(conv_t(x, wt, bt), ws, bs);
    auto fused = conv_st(x, wf, bf);
    EXPECT_LT(max_abs_diff(composed, fused) / std::max(1.0, max_abs(composed)), 1e-4);
  }
}

TEST(ConvProperty, Linearity) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t C = 1 + gen() % 4, K = 1 + gen() % 4, m = 1 + gen() % 5, T = m + gen() % 10;
    auto x = random_array<double>({2, 1, C, T}, gen());
    auto y = random_array<double>({2, 1, C, T}, gen());
    const double a = 1.7, b = -0.3;
    NdArray<double> mix(x.shape());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
    NdArray<double> zero_k({K});
    auto combine = [&](const NdArray<double>& fx, const NdArray<double>& fy) {
      NdArray<double> r(fx.shape());
      for (std::size_t i = 0; i < r.size(); ++i) r[i] = a * fx[i] + b * fy[i];
      return r;
    };
    auto wt = random_array<double>({K, 1, 1, m}, gen());
    EXPECT_LT(max_abs_diff(conv_t(mix, wt, zero_k), combine(conv_t(x, wt, zero_k), conv_t(y, wt, zero_k))), 1e-10);
    auto wst = random_array<double>({K, 1, C, m}, gen());
    EXPECT_LT(max_abs_diff(conv_st(mix, wst, zero_k), combine(conv_st(x, wst, zero_k), conv_st(y, wst, zero_k))),
              1e-10);
    auto h1 = random_array<double>({2, K, C, T}, gen()), h2 = random_array<double>({2, K, C, T}, gen());
    NdArray<double> hm(h1.shape());
    for (std::size_t i = 0; i < hm.size(); ++i) hm[i] = a * h1[i] + b * h2[i];
    auto ws = random_array<double>({K, K, C, 1}, gen());
    EXPECT_LT(max_abs_diff(conv_s(hm, ws, zero_k), combine(conv_s(h1, ws, zero_k), conv_s(h2, ws, zero_k))), 1e-10);
  }
}

TEST(AvgPool, Examples) {
  NdArray<double> x({1, 1, 1, 4}, {1, 2, 3, 4});
  auto y = eval1<double>(x, [](Tape<double>& t, Var v) { return ops::avg_pool_time(t, v, 2, 2); });
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_DOUBLE_EQ(y[0], 1.5);
  EXPECT_DOUBLE_EQ(y[1], 3.5);
  auto r = random_array<double>({2, 3, 1, 9}, 3);
  EXPECT_EQ(max_abs_diff(eval1<double>(r, [](Tape<double>& t, Var v) { return ops::avg_pool_time(t, v, 1, 1); }), r),
            0.0);
  auto c = eval1<double>(NdArray<double>({1, 2, 1, 10}, 3.25),
                         [](Tape<double>& t, Var v) { return ops::avg_pool_time(t, v, 4, 3); });
  EXPECT_EQ(c.dim(3), 3u);
  for (double v : c.data()) EXPECT_DOUBLE_EQ(v, 3.25);
  EXPECT_THROW(eval1<double>(x, [](Tape<double>& t, Var v) { return ops::avg_pool_time(t, v, 5, 1); }),
               DimensionError);
}

TEST(AvgPool, PreservesGlobalMeanWhenTiling) {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t pool = 1 + gen() % 6, n = 1 + gen() % 8;
    auto x = random_array<double>({2, 3, 1, pool * n}, gen());
    auto y = eval1<double>(x, [pool](Tape<double>& t, Var v) { return ops::avg_pool_time(t, v, pool, pool); });
    double mx = 0, my = 0;
    for (double v : x.data()) mx += v;
    for (double v : y.data()) my += v;
    EXPECT_NEAR(mx / x.size(), my / y.size(), 1e-12);
  }
}

TEST(Elementwise, EluValues) {
  NdArray<double> x({4}, {0.0, 2.0, -50.0, -1.0});
  auto y = eval1<double>(x, [](Tape<double>& t, Var v) { return ops::elu(t, v); });
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 2.0);
  EXPECT_NEAR(y[2], -1.0, 1e-15);
  EXPECT_NEAR(y[3], std::exp(-1.0) - 1.0, 1e-15);
}

TEST(Loss, UniformLogitsGiveLn2) {
  Tape<double> tape(false);
  const int label = 0;
  Var l = ops::softmax_cross_entropy(tape, tape.constant(NdArray<double>({1, 2})), std::span<const int>(&label, 1));
  EXPECT_NEAR(tape.value(l)[0], std::log(2.0), 1e-15);
  EXPECT_NEAR(tape.value(l)[0], 0.69315, 1e-5);
}

TEST(Loss, RejectsBadLabels) {
  Tape<double> tape(false);
  std::vector<int> labels = {0, 3};
  EXPECT_THROW(ops::softmax_cross_entropy(tape, tape.constant(NdArray<double>({2, 3})), labels), DataError);
  std::vector<int> one = {0};
  EXPECT_THROW(ops::softmax_cross_entropy(tape, tape.constant(NdArray<double>({2, 3})), one), DimensionError);
}

TEST(Dropout, EvalIsBitIdentical) {
  auto x = random_array<double>({3, 4, 1, 5}, 1);
  Rng rng(1);
  auto y = eval1<double>(x, [&](Tape<double>& t, Var v) { return ops::dropout(t, v, 0.5, Mode::kEval, rng); });
  EXPECT_EQ(x, y);
}

TEST(Dropout, TrainIsInverted) {
  NdArray<double> x({200000}, 1.0);
  Rng rng(3);
  auto y = eval1<double>(x, [&](Tape<double>& t, Var v) { return ops::dropout(t, v, 0.25, Mode::kTrain, rng); });
  double mean = 0;
  std::size_t zeros = 0;
  for (double v : y.data()) {
    mean += v;
    zeros += v == 0.0;
    if (v != 0.0) {
      EXPECT_DOUBLE_EQ(v, 1.0 / 0.75);
    }
  }
  EXPECT_NEAR(mean / y.size(), 1.0, 0.01);
  EXPECT_NEAR(static_cast<double>(zeros) / y.size(), 0.25, 0.01);
}

TEST(Dropout, RejectsBadProbability) {
  Rng rng(1);
  Tape<double> tape(false);
  Var x = tape.constant(NdArray<double>({2}));
  EXPECT_THROW(ops::dropout(tape, x, 1.0, Mode::kTrain, rng), ParameterError);
  EXPECT_THROW(ops::dropout(tape, x, -0.1, Mode::kTrain, rng), ParameterError);
}

TEST(BatchNorm, TrainNormalizesAndUpdatesRunningStats) {
  auto x = random_array<double>({64, 3, 1, 4}, 4, 2.0, 6.0);
  NdArray<double> rm({3}), rv({3}, 1.0);
  Tape<double> tape(false);
  Var y = ops::batch_norm(tape, tape.constant(x), tape.constant(NdArray<double>({3}, 1.0)),
                          tape.constant(NdArray<double>({3})), BatchNormBuffers<double>{&rm, &rv}, Mode::kTrain);
  const auto& v = tape.value(y);
  for (std::size_t k = 0; k < 3; ++k) {
    double s = 0, ss = 0, xm = 0;
    for (std::size_t b = 0; b < 64; ++b)
      for (std::size_t t = 0; t < 4; ++t) {
        s += v.at({b, k, 0, t});
        ss += v.at({b, k, 0, t}) * v.at({b, k, 0, t});
        xm += x.at({b, k, 0, t});
      }
    EXPECT_NEAR(s / 256, 0.0, 1e-12);
    EXPECT_NEAR(ss / 256, 1.0, 1e-3);
    EXPECT_NEAR(rm[k], 0.1 * xm / 256, 1e-12);
  }
}

TEST(BatchNorm, EvalUsesRunningStats) {
  NdArray<double> rm({2}, {1.0, -1.0}), rv({2}, {4.0, 0.25});
  NdArray<double> x({1, 2, 1, 1}, {3.0, 0.0});
  Tape<double> tape(false);
  Var y = ops::batch_norm(tape, tape.constant(x), tape.constant(NdArray<double>({2}, 1.0)),
                          tape.constant(NdArray<double>({2}, 0.5)), BatchNormBuffers<double>{&rm, &rv}, Mode::kEval);
  EXPECT_NEAR(tape.value(y)[0], 2.0 / std::sqrt(4.0 + 1e-5) + 0.5, 1e-12);
  EXPECT_NEAR(tape.value(y)[1], 1.0 / std::sqrt(0.25 + 1e-5) + 0.5, 1e-12);
  EXPECT_EQ(rm[0], 1.0);
}

TEST(Attention, HeadsMustDivideWidth) {
  Tape<double> tape(false);
  auto c = [&](Shape s) { return tape.constant(NdArray<double>(std::move(s))); };
  Var x = c({2, 3, 6});
  AttentionParams p{c({6, 6}), c({6}), c({6, 6}), c({6}), c({6, 6}), c({6}), c({6, 6}), c({6})};
  EXPECT_THROW(ops::multi_head_attention(tape, x, 4, p, c({6}), c({6})), DimensionError);
  EXPECT_NO_THROW(ops::multi_head_attention(tape, x, 3, p, c({6}), c({6})));
}

TEST(Attention, PermutationEquivariantWithoutPositions) {
  auto x = random_array<double>({1, 4, 6}, 21);
  std::vector<NdArray<double>> w;
  for (int i = 0; i < 8; ++i) w.push_back(random_array<double>(i % 2 ? Shape{6} : Shape{6, 6}, 30 + i));
  auto run = [&](const NdArray<double>& in) {
    Tape<double> tape(false);
    std::vector<Var> v;
    for (auto& a : w) v.push_back(tape.constant(a));
    AttentionParams p{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
    return tape.value(ops::multi_head_attention(tape, tape.constant(in), 2, p,
                                                tape.constant(NdArray<double>({6}, 1.0)),
                                                tape.constant(NdArray<double>({6}))));
  };
  NdArray<double> swapped = x;
  for (std::size_t e = 0; e < 6; ++e) std::swap(swapped.at({0, 0, e}), swapped.at({0, 3, e}));
  auto a = run(x), b = run(swapped);
  for (std::size_t e = 0; e < 6; ++e) {
    EXPECT_NEAR(a.at({0, 0, e}), b.at({0, 3, e}), 1e-12);
    EXPECT_NEAR(a.at({0, 1, e}), b.at({0, 1, e}), 1e-12);
  }
}

TEST(NdArrayTest, InvariantsAndErrors) {
  EXPECT_THROW(NdArray<double>({2, 3}, std::vector<double>(5)), DimensionError);
  EXPECT_THROW(NdArray<double>({2, 0}), DimensionError);
  NdArray<double> a({2, 3}, 1.0);
  auto r = a.reshaped({3, 2});
  EXPECT_EQ(r.size(), a.size());
  EXPECT_THROW(a.reshaped({4, 2}), DimensionError);
  EXPECT_FALSE(a.has_grad());
  a.grad()[1] = 2.0;
  EXPECT_EQ(a.grad().size(), a.size());
  a.zero_grad();
  EXPECT_EQ(a.grad()[1], 0.0);
}

}  // namespace
}  // namespace stconv
