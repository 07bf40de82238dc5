#include <gtest/gtest.h>

#include <sstream>

#include "stairnet/config.hpp"
#include "stairnet/errors.hpp"

namespace stairnet {
namespace {

TEST(Config, DefaultsDescribeToyDetector) {
  ExperimentConfig cfg;
  cfg.finalize();
  EXPECT_EQ(cfg.model.backbone.input_size, 64);
  EXPECT_EQ(cfg.model.boxes.grids, (std::vector<int>{16, 8, 4, 2, 1}));
  EXPECT_EQ(cfg.model.head.boxes_per_cell, 6);
  EXPECT_EQ(cfg.train.batch_size, 16);
  EXPECT_EQ(cfg.data.image_size, 64);
}

TEST(Config, ParsesGroupedKeys) {
  const auto cfg = parse_config_text(
      "# comment\n"
      "combine.mode = product   # trailing\n"
      "combine.refine=none\n"
      "combine.upsample = bilinear\n"
      "boxes.aspect_ratios = 1.6, 2, 3\n"
      "head.mode = multi\n"
      "train.lr_decay_iters = 10,20\n"
      "train.total_iters = 30\n"
      "backbone.channels = 8,8,8,8,8\n"
      "data.size_mix = 1,0,0\n"
      "data.class_colors = true\n");
  EXPECT_EQ(cfg.model.combine.mode, EltwiseMode::kProduct);
  EXPECT_EQ(cfg.model.combine.refine, RefineKind::kNone);
  EXPECT_EQ(cfg.model.combine.upsample, UpsampleKind::kBilinear);
  EXPECT_EQ(cfg.model.boxes.aspect_ratios, (std::vector<double>{1.6, 2, 3}));
  EXPECT_EQ(cfg.model.head.mode, HeadMode::kMulti);
  EXPECT_EQ(cfg.train.lr_decay_iters, (std::vector<int>{10, 20}));
  EXPECT_EQ(cfg.model.backbone.level_channels[3], 8);
  EXPECT_EQ(cfg.data.size_mix[0], 1.0);
  EXPECT_TRUE(cfg.data.class_colors);
}

TEST(Config, UnknownKeyIsError) {
  try {
    parse_config_text("train.lr = 0.1\ntrain.learning_rate = 0.1\n");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("train.learning_rate"), std::string::npos) << msg;
  }
}

TEST(Config, BadValuesAreErrors) {
  EXPECT_THROW(parse_config_text("train.lr = fast\n"), ConfigError);
  EXPECT_THROW(parse_config_text("train.batch_size = 1.5\n"), ConfigError);
  EXPECT_THROW(parse_config_text("combine.mode = mean\n"), ConfigError);
  EXPECT_THROW(parse_config_text("backbone.strides = 4,8\n"), ConfigError);
  EXPECT_THROW(parse_config_text("combine.enabled = maybe\n"), ConfigError);
  EXPECT_THROW(parse_config_text("no equals sign\n"), ConfigError);
}

TEST(Config, FinalizeCrossChecks) {
  auto cfg = parse_config_text("data.image_size = 32\n");
  EXPECT_THROW(cfg.finalize(), ConfigError);
  cfg = parse_config_text("train.lr_decay_iters = 6000,4000\n");
  EXPECT_THROW(cfg.finalize(), ConfigError);
  cfg = parse_config_text("train.total_iters = 100\ntrain.lr_decay_iters = 100\n");
  EXPECT_THROW(cfg.finalize(), ConfigError);
  cfg = parse_config_text("combine.enabled = false\nhead.mode = unified\n");
  EXPECT_THROW(cfg.finalize(), ConfigError);  // heterogeneous backbone channels
}

TEST(Config, TextRoundTrip) {
  auto cfg = parse_config_text("train.lr = 0.0123\nboxes.scales = 0.07,0.15,0.3,0.5,0.7\ntrain.seed = 99\n");
  const std::string text = to_text(cfg);
  const auto back = parse_config_text(text);
  EXPECT_EQ(to_text(back), text);
  EXPECT_EQ(back.train.lr, 0.0123);
  EXPECT_EQ(back.model.boxes.scales[0], 0.07);
  EXPECT_EQ(back.train.seed, 99u);
  // Every key appears exactly once.
  for (const auto& k : config_keys()) {
    const auto first = text.find(k + " = ");
    ASSERT_NE(first, std::string::npos) << k;
    EXPECT_EQ(text.find("\n" + k + " = ", first + 1), std::string::npos) << k;
  }
}

TEST(Config, FaithfulSchedule) {
  const TrainConfig t = TrainConfig::faithful();
  EXPECT_EQ(t.lr, 1e-3);
  EXPECT_EQ(t.lr_decay_iters, (std::vector<int>{80000, 100000}));
  EXPECT_EQ(t.batch_size, 16);
  EXPECT_EQ(t.momentum, 0.9);
  EXPECT_EQ(t.weight_decay, 1e-4);
}

}  // namespace
}  // namespace stairnet
