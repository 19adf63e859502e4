#include <gtest/gtest.h>

#include "dcpr/config.hpp"
#include "dcpr/error.hpp"

using namespace dcpr;

TEST(Config, DefaultsRoundTripThroughFormat) {
  const TrainConfig a;
  const TrainConfig b = parse_train_config(a.format());
  EXPECT_EQ(b.format(), a.format());
  EXPECT_NO_THROW(a.validate());
}

TEST(Config, ParsesKeysCommentsAndEnums) {
  const TrainConfig c = parse_train_config(
      "# comment\n\nT = 512\nT_R = 8\neta = 0.01\noptimizer = adam\nloss = bce\nmode = dcpr_t\n"
      "precision = f64\nseed = 18446744073709551615\n");
  EXPECT_EQ(c.max_step, 512);
  EXPECT_EQ(c.reverse_steps, 8);
  EXPECT_DOUBLE_EQ(c.eta, 0.01);
  EXPECT_EQ(c.optimizer, Optimizer::kAdam);
  EXPECT_EQ(c.loss, LossForm::kBce);
  EXPECT_EQ(c.mode, Mode::kDcprT);
  EXPECT_EQ(c.precision, Precision::kF64);
  EXPECT_EQ(c.seed, 18446744073709551615ull);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_train_config("learning_rate = 0.1\n"), ConfigError);
  EXPECT_THROW(parse_train_config("dim = abc\n"), ConfigError);
  EXPECT_THROW(parse_train_config("optimizer = rmsprop\n"), ConfigError);
  EXPECT_THROW(parse_train_config("just a line\n"), ConfigError);
  EXPECT_FALSE(is_train_config_key("learning_rate"));
  EXPECT_TRUE(is_train_config_key("T_R"));
}

TEST(Config, ValidateCatchesInconsistentValues) {
  TrainConfig c;
  c.reverse_steps = c.max_step + 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.w = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.negatives = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, IntListParsing) {
  EXPECT_EQ(parse_int_list("t_r", "8,16,1024"), (std::vector<int>{8, 16, 1024}));
  EXPECT_THROW(parse_int_list("t_r", "8,,16"), ConfigError);
}
