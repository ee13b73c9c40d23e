#include <gtest/gtest.h>

#include "pacgen/config.hpp"

namespace pacgen::config {
namespace {

TEST(ParseConfig, EmptyGivesDefaults) {
  const auto c = parse_config_text("");
  EXPECT_EQ(c.n, 10240u);
  EXPECT_EQ(c.n0, 5120u);
  EXPECT_EQ(c.dataset, "ring8");
  EXPECT_TRUE(std::holds_alternative<bounds::NOver1024>(c.lambda_rule));
}

TEST(ParseConfig, ValuesAndComments) {
  const auto c = parse_config_text(
      "# comment\n"
      "dataset = grid25\n"
      "sigma0=1e-5\n"
      "n = 2000\n"
      "\n"
      "gen_widths = 2,32,32,2\n"
      "lambda_rule = sqrt_n\n"
      "slack = tv\n");
  EXPECT_EQ(c.dataset, "grid25");
  EXPECT_EQ(c.sigma0, 1e-5);
  EXPECT_EQ(c.n, 2000u);
  EXPECT_EQ(c.n0, 1000u);
  EXPECT_EQ(c.gen_arch.widths, (std::vector<Eigen::Index>{2, 32, 32, 2}));
  EXPECT_TRUE(std::holds_alternative<bounds::SqrtN>(c.lambda_rule));
  EXPECT_EQ(c.slack, trainer::SlackChoice::kTotalVariation);
}

TEST(ParseConfig, NumericLambdaIsFixed) {
  const auto c = parse_config_text("lambda_rule = 2.5\n");
  EXPECT_DOUBLE_EQ(std::get<bounds::Fixed>(c.lambda_rule).value, 2.5);
}

TEST(ParseConfig, OptimalLambdaUsesDatasetDiameter) {
  const auto c = parse_config_text("lambda_rule = optimal\noptimal_complexity = 3\n");
  const auto& o = std::get<bounds::Optimal>(c.lambda_rule);
  EXPECT_DOUBLE_EQ(o.diameter, 6.4);
  EXPECT_DOUBLE_EQ(o.complexity, 3.0);
}

TEST(ParseConfig, Errors) {
  EXPECT_THROW(parse_config_text("n0 = 20000\n"), ConfigError);
  EXPECT_THROW(parse_config_text("colour = blue\n"), ConfigError);
  EXPECT_THROW(parse_config_text("n = many\n"), ConfigError);
  EXPECT_THROW(parse_config_text("sigma0 = 1e-5x\n"), ConfigError);
  EXPECT_THROW(parse_config_text("n = 100\nn = 200\n"), ConfigError);
  EXPECT_THROW(parse_config_text("just a line\n"), ConfigError);
  EXPECT_THROW(parse_config_text("slack = hyperbolic\n"), ConfigError);
  EXPECT_THROW(parse_config_text("n = -5\n"), ConfigError);
  EXPECT_THROW(parse_config("/nonexistent/pacgen.cfg"), ConfigError);
}

}  // namespace
}  // namespace pacgen::config
