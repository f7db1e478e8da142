#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "gdwct/config.hpp"

using namespace gdwct;

namespace {

std::size_t error_line(std::string_view text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  ADD_FAILURE() << "expected ConfigError for: " << text;
  return 0;
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  const TrainConfig c = parse_config("");
  EXPECT_EQ(c.lr, 1e-4);
  EXPECT_EQ(c.beta1, 0.5);
  EXPECT_EQ(c.beta2, 0.999);
  EXPECT_EQ(c.adam_eps, 1e-8);
  EXPECT_EQ(c.decay_rate, 0.5);
  EXPECT_EQ(c.total_iters, 2000u);
  EXPECT_EQ(c.decay_start_iter, 1000u);
  EXPECT_EQ(c.decay_every, 500u);
  EXPECT_EQ(c.weights.lambda_latent, 1.0);
  EXPECT_EQ(c.weights.lambda_pixel, 10.0);
  EXPECT_EQ(c.weights.lambda_w, 0.001);
  EXPECT_EQ(c.weights.lambda_c, 10.0);
  EXPECT_EQ(c.net.base_channels, 16u);
  EXPECT_EQ(c.net.groups, 4u);
}

TEST(Config, ParsesValuesAndComments) {
  const TrainConfig c = parse_config(
      "# desk run\n"
      "lr = 2e-4   # faster\n"
      "\n"
      "  groups=16\n"
      "seed = 42\r\n"
      "center_crop = true\n"
      "lambda_w = 0.01\n");
  EXPECT_EQ(c.lr, 2e-4);
  EXPECT_EQ(c.net.groups, 16u);
  EXPECT_EQ(c.net.group_dim(), 1u);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_TRUE(c.center_crop);
  EXPECT_EQ(c.weights.lambda_w, 0.01);
}

TEST(Config, LocatedErrors) {
  EXPECT_EQ(error_line("lr = 1e-4\nbogus = 1\n"), 2u);
  EXPECT_EQ(error_line("\n\nlr = fast\n"), 3u);
  EXPECT_EQ(error_line("batch_size = -1\n"), 1u);
  EXPECT_EQ(error_line("seed = 1.5\n"), 1u);
  EXPECT_EQ(error_line("just words\n"), 1u);
  EXPECT_EQ(error_line("lr =\n"), 1u);
  EXPECT_EQ(error_line("lr = 1\nlr = 2\n"), 2u);
  EXPECT_EQ(error_line("center_crop = maybe\n"), 1u);
}

TEST(Config, InvariantViolationsPointAtTheKey) {
  EXPECT_EQ(error_line("seed = 3\ngroups = 3\n"), 2u);
  EXPECT_EQ(error_line("beta1 = 1.0\n"), 1u);
  EXPECT_EQ(error_line("lr = 0\n"), 1u);
  EXPECT_EQ(error_line("\ndecay_rate = 1.5\n"), 2u);
  EXPECT_EQ(error_line("lambda_c = -1\n"), 1u);
  EXPECT_THROW(parse_config("n_hops = 6\n"), ConfigError);
}

TEST(Config, MessageCarriesLine) {
  try {
    parse_config("lr = 1e-4\nunknown_key = 3\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("unknown_key"), std::string::npos);
  }
}

TEST(Config, FormatRoundTrips) {
  TrainConfig c;
  c.lr = 0.1 + 0.2;
  c.seed = 123456789012345ull;
  c.weights.lambda_w = 1.0 / 3.0;
  c.net.groups = 8;
  c.center_crop = true;
  const TrainConfig back = parse_config(format_config(c));
  EXPECT_EQ(format_config(back), format_config(c));
  EXPECT_EQ(back.lr, c.lr);
  EXPECT_EQ(back.weights.lambda_w, c.weights.lambda_w);
  EXPECT_EQ(back.seed, c.seed);
}

TEST(Config, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "gdwct_test_config.txt";
  {
    std::ofstream out(path);
    out << "total_iters = 50\n";
  }
  EXPECT_EQ(load_config(path).total_iters, 50u);
  std::filesystem::remove(path);
  EXPECT_THROW(load_config(path), IoError);
}
