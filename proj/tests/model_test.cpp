#include <gtest/gtest.h>

#include <cmath>

#include "model_gradcheck.hpp"
#include "stconv/errors.hpp"
#include "stconv/model.hpp"
#include "test_util.hpp"

namespace stconv {
namespace {

using testing::max_abs;
using testing::max_abs_diff;
using testing::random_array;

ModelConfig small_config(std::string_view type) {
  ModelConfig c;
  c.n_channels = 4;
  c.n_times = 60;
  c.n_classes = 3;
  c.n_kernels = 6;
  c.kernel_len = 5;
  c.pool_size = 8;
  c.pool_stride = 8;
  c.attn_heads = 2;
  return with_model_type(c, type);
}

// Gives batch norm non-trivial running statistics so eval mode is exercised.
template <typename T>
void randomize_buffers(Model<T>& m, std::uint64_t seed) {
  auto mean = random_array<T>({m.config().n_kernels}, seed, -0.5, 0.5);
  auto var = random_array<T>({m.config().n_kernels}, seed + 1, 0.5, 2.0);
  m.buffer("bn.running_mean") = mean;
  m.buffer("bn.running_var") = var;
}

TEST(ModelConfigTest, EncoderOutputShapeForFullSizeConfig) {
  ModelConfig c;
  c.n_channels = 22;
  c.n_times = 1000;
  EXPECT_EQ(c.conv_len(), 976u);
  EXPECT_EQ(c.pooled_len(), 9u);
  for (const auto& type : all_model_types()) {
    auto m = build_model<float>(with_model_type(c, type), 1);
    m.set_mode(Mode::kEval);
    auto acts = extract_encoder_activations(m, random_array<float>({2, 22, 1000}, 5));
    EXPECT_EQ(acts.shape(), (Shape{2, 40, 9})) << type;
  }
}

TEST(ModelConfigTest, ValidationErrors) {
  ModelConfig c = small_config("cnn1d");
  EXPECT_NO_THROW(c.validate());
  auto bad = c;
  bad.kernel_len = 61;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.pool_size = 57;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.dropout_p = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = small_config("conf1d");
  bad.attn_heads = 4;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = small_config("conf2d");
  bad.embed_dim = 8;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(build_model<double>(bad, 1), ConfigError);
  EXPECT_THROW(with_model_type(c, "cnn3d"), ConfigError);
}

TEST(ModelTest, TypeNamesRoundTrip) {
  for (const auto& type : all_model_types()) EXPECT_EQ(model_type_name(small_config(type)), type);
}

TEST(ModelTest, SameSeedBitIdenticalParameters) {
  for (const auto& type : all_model_types()) {
    auto a = build_model<float>(small_config(type), 42);
    auto b = build_model<float>(small_config(type), 42);
    auto c = build_model<float>(small_config(type), 43);
    ASSERT_EQ(a.parameters().size(), b.parameters().size());
    bool any_diff = false;
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
      EXPECT_EQ(a.parameters()[i].value, b.parameters()[i].value);
      any_diff |= !(a.parameters()[i].value == c.parameters()[i].value);
    }
    EXPECT_TRUE(any_diff);
  }
}

TEST(ModelTest, InitializationBounds) {
  auto m = build_model<double>(small_config("cnn1d"), 3);
  const double bound_t = std::sqrt(1.0 / 5.0), bound_s = std::sqrt(1.0 / (6.0 * 4.0));
  EXPECT_LE(max_abs(m.param("temporal.weight")), bound_t);
  EXPECT_LE(max_abs(m.param("spatial.weight")), bound_s);
  EXPECT_GT(max_abs(m.param("temporal.weight")), 0.5 * bound_t);
  for (double v : m.param("bn.weight").data()) EXPECT_EQ(v, 1.0);
  for (double v : m.param("bn.bias").data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(m.param("spatial.weight").shape(), (Shape{6, 6, 4, 1}));
  EXPECT_EQ(m.param("fc.weight").shape(), (Shape{3, 6 * 7}));
}

TEST(ModelTest, ZeroInputZeroHeadGivesUniformLogits) {
  for (const auto& type : {"cnn1d", "cnn2d"}) {
    auto m = build_model<double>(small_config(type), 5);
    m.param("fc.weight").fill(0.0);
    m.param("fc.bias").fill(0.0);
    m.set_mode(Mode::kEval);
    auto logits = m.predict(NdArray<double>({2, 4, 60}));
    for (double v : logits.data()) EXPECT_EQ(v, 0.0);
  }
  auto conf = build_model<double>(small_config("conf2d"), 5);
  conf.param("head.fc2.weight").fill(0.0);
  conf.param("head.fc2.bias").fill(0.0);
  auto logits = conf.predict(NdArray<double>({1, 4, 60}));
  for (double v : logits.data()) EXPECT_EQ(v, 0.0);
}

TEST(ModelTest, BatchingConsistencyInEvalMode) {
  for (const auto& type : all_model_types()) {
    auto m = build_model<double>(small_config(type), 6);
    randomize_buffers(m, 60);
    m.set_mode(Mode::kEval);
    auto x = random_array<double>({8, 4, 60}, 7);
    auto all = m.predict(x);
    for (std::size_t row : {0u, 5u}) {
      NdArray<double> one({1, 4, 60});
      std::copy_n(x.ptr() + row * 240, 240, one.ptr());
      auto single = m.predict(one);
      for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(single[k], all.at({row, k})) << type;
    }
  }
}

TEST(ModelTest, RandomInputFiniteLogits) {
  for (const auto& type : all_model_types()) {
    auto m = build_model<float>(small_config(type), 8);
    auto logits = m.predict(random_array<float>({5, 4, 60}, 9, -10.0, 10.0));
    EXPECT_EQ(logits.shape(), (Shape{5, 3}));
    for (float v : logits.data()) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(ModelTest, NonFiniteActivationNamesLayer) {
  auto m = build_model<double>(small_config("cnn2d"), 10);
  auto x = random_array<double>({1, 4, 60}, 11);
  x[3] = std::numeric_limits<double>::infinity();
  try {
    m.predict(x);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("conv"), std::string::npos);
  }
}

TEST(ModelTest, InputShapeMismatch) {
  auto m = build_model<double>(small_config("cnn1d"), 12);
  m.set_mode(Mode::kEval);
  EXPECT_THROW(m.predict(NdArray<double>({2, 3, 60})), DimensionError);
  EXPECT_THROW(extract_encoder_activations(m, NdArray<double>({2, 4, 59})), DimensionError);
  m.set_mode(Mode::kTrain);
  EXPECT_THROW(extract_encoder_activations(m, NdArray<double>({2, 4, 60})), ContractError);
}

TEST(Fusion, LogitsMatchInDoublePrecision) {
  for (const auto& type : {"cnn1d", "conf1d"}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto m1 = build_model<double>(small_config(type), seed);
      randomize_buffers(m1, seed * 100);
      m1.set_mode(Mode::kEval);
      auto m2 = fuse_1d_to_2d(m1);
      EXPECT_EQ(m2.config().conv_mode, ConvMode::kFused2d);
      auto x = random_array<double>({20, 4, 60}, seed + 1000, -3.0, 3.0);
      EXPECT_LT(max_abs_diff(m1.predict(x), m2.predict(x)), 1e-10) << type << " seed " << seed;
      EXPECT_LT(max_abs_diff(extract_encoder_activations(m1, x), extract_encoder_activations(m2, x)), 1e-10);
    }
  }
}

TEST(Fusion, LogitsMatchInSinglePrecision) {
  auto m1 = build_model<float>(small_config("cnn1d"), 3);
  m1.set_mode(Mode::kEval);
  auto m2 = fuse_1d_to_2d(m1);
  auto x = random_array<float>({20, 4, 60}, 4);
  auto a = m1.predict(x), b = m2.predict(x);
  EXPECT_LT(max_abs_diff(a, b) / std::max(1.0, max_abs(a)), 1e-4);
}

TEST(Fusion, DownstreamCopiedVerbatim) {
  auto m1 = build_model<double>(small_config("conf1d"), 7);
  randomize_buffers(m1, 70);
  auto m2 = fuse_1d_to_2d(m1);
  for (const auto& p : m2.parameters()) {
    if (p.name.starts_with("spatiotemporal.")) continue;
    EXPECT_EQ(p.value, m1.param(p.name)) << p.name;
  }
  EXPECT_EQ(m2.buffer("bn.running_var"), m1.buffer("bn.running_var"));
}

TEST(Fusion, ZeroSpatialWeightsGiveZeroKernel) {
  auto m1 = build_model<double>(small_config("cnn1d"), 8);
  m1.param("spatial.weight").fill(0.0);
  auto m2 = fuse_1d_to_2d(m1);
  EXPECT_EQ(max_abs(m2.param("spatiotemporal.weight")), 0.0);
  EXPECT_EQ(m2.param("spatiotemporal.bias"), m1.param("spatial.bias"));
}

TEST(Fusion, RankOneCase) {
  ModelConfig c = small_config("cnn1d");
  c.n_kernels = 1;
  c.n_channels = 1;
  auto m1 = build_model<double>(c, 9);
  auto m2 = fuse_1d_to_2d(m1);
  const double ks = m1.param("spatial.weight")[0];
  for (std::size_t tau = 0; tau < c.kernel_len; ++tau) {
    EXPECT_DOUBLE_EQ(m2.param("spatiotemporal.weight")[tau], ks * m1.param("temporal.weight")[tau]);
  }
  EXPECT_DOUBLE_EQ(m2.param("spatiotemporal.bias")[0],
                   m1.param("spatial.bias")[0] + ks * m1.param("temporal.bias")[0]);
}

TEST(Fusion, RejectsFusedInput) {
  auto m = build_model<double>(small_config("cnn2d"), 1);
  EXPECT_THROW(fuse_1d_to_2d(m), ContractError);
}

TEST(CostModel, MacCounts) {
  ModelConfig c;
  c.n_channels = 22;
  c.n_times = 1000;
  auto macs = count_macs(c);
  EXPECT_EQ(macs.encoder_2d, 21'472'000u);
  EXPECT_EQ(macs.encoder_1d, 21'472'000u + 40u * 40u * 22u * 976u);
  EXPECT_EQ(macs.ratio_num, 13u);
  EXPECT_EQ(macs.ratio_den, 5u);
  EXPECT_DOUBLE_EQ(macs.ratio(), 2.6);
  c.kernel_len = 40;
  EXPECT_EQ(count_macs(c).ratio_num, 2u);
  EXPECT_EQ(count_macs(c).ratio_den, 1u);
}

TEST(CostModel, RatioIndependentOfShape) {
  for (std::size_t C : {1u, 3u, 22u, 64u}) {
    for (std::size_t T : {100u, 500u, 1000u}) {
      ModelConfig c;
      c.n_channels = C;
      c.n_times = T;
      EXPECT_DOUBLE_EQ(count_macs(c).ratio(), 2.6);
      const auto m = count_macs(c);
      EXPECT_EQ(m.encoder_1d * 5, m.encoder_2d * 13);
    }
  }
}

TEST(CostModel, EncoderParameterCounts) {
  ModelConfig c;
  c.n_channels = 22;
  c.n_times = 1000;
  EXPECT_EQ(encoder_parameter_count(with_model_type(c, "cnn2d")), 22'040u);
  EXPECT_EQ(encoder_parameter_count(with_model_type(c, "cnn1d")), 36'280u);
  auto m = build_model<float>(with_model_type(c, "cnn2d"), 1);
  EXPECT_EQ(m.param("spatiotemporal.weight").size() + m.param("spatiotemporal.bias").size(), 22'040u);
}

TEST(Gradients, FullShallowCnnLoss) {
  ModelConfig c;
  c.n_channels = 3;
  c.n_times = 16;
  c.n_classes = 3;
  c.n_kernels = 3;
  c.kernel_len = 4;
  c.pool_size = 3;
  c.dropout_p = 0.25;
  for (const auto& type : {"cnn1d", "cnn2d"}) {
    auto m = build_model<double>(with_model_type(c, type), 11);
    auto x = random_array<double>({4, 1, 3, 16}, 12);
    auto r = testing::check_model_loss(m, x, {0, 1, 2, 1});
    EXPECT_LT(r.max_rel_error, 1e-4) << type << " worst input " << r.worst_input << " analytic " << r.analytic
                                     << " numeric " << r.numeric;
  }
}

TEST(Gradients, ConformerLoss) {
  ModelConfig c;
  c.n_channels = 3;
  c.n_times = 16;
  c.n_classes = 2;
  c.n_kernels = 4;
  c.kernel_len = 4;
  c.pool_size = 4;
  c.dropout_p = 0.0;
  c.positional_encoding = true;
  for (const auto& type : {"conf1d", "conf2d"}) {
    auto m = build_model<double>(with_model_type(c, type), 13);
    auto x = random_array<double>({3, 1, 3, 16}, 14);
    auto r = testing::check_model_loss(m, x, {0, 1, 1});
    EXPECT_LT(r.max_rel_error, 1e-4) << type << " worst input " << r.worst_input;
  }
}

TEST(Gradients, EveryParameterGroupReceivesGradient) {
  for (const auto& type : all_model_types()) {
    auto m = build_model<double>(small_config(type), 15);
    Tape<double> tape;
    Rng rng(16);
    auto out = m.forward(tape, tape.constant(random_array<double>({6, 1, 4, 60}, 17)), rng);
    std::vector<int> y = {0, 1, 2, 0, 1, 2};
    tape.backward(ops::softmax_cross_entropy(tape, out.logits, y));
    for (auto& p : m.parameters()) {
      double g = 0.0;
      for (double v : p.value.grad()) g = std::max(g, std::abs(v));
      EXPECT_GT(g, 0.0) << type << " " << p.name;
    }
  }
}

TEST(ModelTest, CastPreservesValues) {
  auto m = build_model<float>(small_config("conf1d"), 20);
  auto d = m.cast<double>();
  auto back = d.cast<float>();
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    EXPECT_EQ(m.parameters()[i].value, back.parameters()[i].value);
  }
}

}  // namespace
}  // namespace stconv
