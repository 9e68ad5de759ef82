#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "stconv/checkpoint.hpp"
#include "stconv/errors.hpp"
#include "test_util.hpp"

namespace stconv {
namespace {

namespace fs = std::filesystem;

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("stconv_ckpt_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

ModelConfig config_for(std::string_view type) {
  ModelConfig c;
  c.n_channels = 5;
  c.n_times = 80;
  c.n_classes = 4;
  c.n_kernels = 8;
  c.kernel_len = 7;
  c.pool_size = 10;
  c.pool_stride = 5;
  return with_model_type(c, type);
}

TEST_F(CheckpointTest, RoundTripIsBitExact) {
  for (const auto& type : all_model_types()) {
    auto m = build_model<float>(config_for(type), 3);
    m.buffer("bn.running_mean") = testing::random_array<float>({8}, 4);
    m.set_mode(Mode::kEval);
    CheckpointInfo info;
    info.scaler = Scaler{{0.1, 0.2, 0.3, 0.4, 0.5}, {1.0, 2.0, 3.0, 4.0, 5.0}};
    info.extra = {{"fold", 2}};
    save_checkpoint(m, dir_ / type, info);
    CheckpointInfo loaded_info;
    auto back = load_checkpoint(dir_ / type, &loaded_info);
    EXPECT_EQ(back.config(), m.config());
    EXPECT_EQ(back.mode(), Mode::kEval);
    ASSERT_EQ(back.parameters().size(), m.parameters().size());
    for (std::size_t i = 0; i < m.parameters().size(); ++i) {
      EXPECT_EQ(back.parameters()[i].name, m.parameters()[i].name);
      EXPECT_EQ(back.parameters()[i].value, m.parameters()[i].value);
    }
    EXPECT_EQ(back.buffer("bn.running_mean"), m.buffer("bn.running_mean"));
    ASSERT_TRUE(loaded_info.scaler.has_value());
    EXPECT_EQ(loaded_info.scaler->std, info.scaler->std);
    EXPECT_EQ(loaded_info.extra["fold"], 2);
  }
}

TEST_F(CheckpointTest, DoubleModelIsRoundedToFloat) {
  auto m = build_model<double>(config_for("cnn1d"), 5);
  save_checkpoint(m, dir_);
  auto back = load_checkpoint(dir_);
  auto expected = m.cast<float>();
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    EXPECT_EQ(back.parameters()[i].value, expected.parameters()[i].value);
  }
}

TEST_F(CheckpointTest, TruncatedBufferIsFormatError) {
  save_checkpoint(build_model<float>(config_for("cnn2d"), 1), dir_);
  fs::resize_file(dir_ / "params.bin", fs::file_size(dir_ / "params.bin") - 4);
  try {
    load_checkpoint(dir_);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("expected"), std::string::npos);
  }
}

TEST_F(CheckpointTest, MissingDirectoryIsFormatError) { EXPECT_THROW(load_checkpoint(dir_ / "nope"), FormatError); }

TEST(ConfigJson, RoundTripAndStrictness) {
  for (const auto& type : all_model_types()) {
    auto c = config_for(type);
    c.positional_encoding = type == "conf2d";
    EXPECT_EQ(config_from_json(config_to_json(c)), c);
  }
  auto j = config_to_json(config_for("cnn1d"));
  j["pool_sizee"] = 3;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = config_to_json(config_for("cnn1d"));
  j["n_kernels"] = -4;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = config_to_json(config_for("cnn1d"));
  j["conv_mode"] = "3d";
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = config_to_json(config_for("cnn1d"));
  j["kernel_len"] = 500;
  EXPECT_THROW(config_from_json(j), ConfigError);
}

}  // namespace
}  // namespace stconv
