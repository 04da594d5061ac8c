#include <gtest/gtest.h>

#include "ci_select/config.hpp"
#include "test_util.hpp"

namespace ci_select {
namespace {

TEST(Config, Defaults) {
  const RunConfig c;
  EXPECT_EQ(c.front_end.frame_ms, 25.0);
  EXPECT_EQ(c.front_end.hop_ms, 10.0);
  EXPECT_EQ(c.front_end.n_mels, 80);
  EXPECT_EQ(c.embed.n_parts, 20);
  EXPECT_EQ(c.embed.sigma_gd, 0.07);
  EXPECT_EQ(c.hsic.rbf_sigma, 0.05);
  EXPECT_NO_THROW(validate(c));
}

TEST(Config, ParsesWithCommentsAndWhitespace) {
  const auto c = parse_config(
      "# front end\n"
      "  n_mels = 40   # fewer bands\n"
      "\n"
      "sigma_gd=0.1\r\n"
      "preemphasis = true\n"
      "max_per_class = 12\n");
  EXPECT_EQ(c.front_end.n_mels, 40);
  EXPECT_EQ(c.embed.sigma_gd, 0.1);
  EXPECT_TRUE(c.front_end.preemphasis);
  EXPECT_EQ(c.hsic.grouping.max_per_class, 12u);
}

TEST(Config, UnknownKeyNamesLine) {
  try {
    parse_config("n_mels = 40\nwindow = hamming\n", "run.cfg");
    FAIL();
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("run.cfg:2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("window"), std::string::npos) << msg;
  }
}

TEST(Config, BoundsAndTypes) {
  EXPECT_THROW(parse_config("n_mels = 0"), UsageError);
  EXPECT_THROW(parse_config("n_mels = 4.5"), UsageError);
  EXPECT_THROW(parse_config("sigma_gd = -1"), UsageError);
  EXPECT_THROW(parse_config("rbf_sigma = abc"), UsageError);
  EXPECT_THROW(parse_config("standardize = maybe"), UsageError);
  EXPECT_THROW(parse_config("no equals sign"), UsageError);
  EXPECT_THROW(parse_config("f0_min = 500"), UsageError);
  EXPECT_THROW(parse_config("fmin = 3000\nfmax = 2000"), UsageError);
}

TEST(Config, OverridesApplyAfterFile) {
  auto c = parse_config("n_parts = 10");
  apply_override(c, "n_parts=30");
  EXPECT_EQ(c.embed.n_parts, 30);
  EXPECT_THROW(apply_override(c, "n_parts"), UsageError);
  EXPECT_THROW(apply_override(c, "bogus=1"), UsageError);
}

TEST(Config, LoadFromFile) {
  testing::TempDir dir;
  testing::write_file(dir / "a.cfg", "hop_ms = 5\n");
  EXPECT_EQ(load_config(dir / "a.cfg").front_end.hop_ms, 5.0);
  EXPECT_THROW(load_config(dir / "missing.cfg"), UsageError);
}

TEST(Config, EchoCoversEveryKey) {
  RunConfig c;
  c.front_end.n_mels = 64;
  const auto echo = config_echo(c);
  EXPECT_EQ(echo.size(), config_keys().size());
  EXPECT_EQ(echo.at("n_mels"), 64);
  EXPECT_EQ(echo.at("sigma_gd"), 0.07);
  EXPECT_EQ(echo.at("standardize"), true);
}

TEST(Config, EchoRoundTrips) {
  RunConfig c;
  c.hsic.rbf_sigma = 0.125;
  c.synth.seed = 77;
  std::string text;
  const auto echo = config_echo(c);
  for (const auto& [k, v] : echo.items()) text += k + " = " + v.dump() + "\n";
  EXPECT_EQ(config_echo(parse_config(text)), config_echo(c));
}

}  // namespace
}  // namespace ci_select
