#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "pacgen/probdist.hpp"

namespace pacgen::probdist {
namespace {

DiagonalGaussian random_gaussian(int dim, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> ls(-1.5, 0.5);
  DiagonalGaussian g{Eigen::VectorXd(dim), Eigen::VectorXd(dim)};
  for (int i = 0; i < dim; ++i) {
    g.mean(i) = normal(engine);
    g.log_std(i) = ls(engine);
  }
  return g;
}

// One-dimensional normal log-density written out directly.
double normal_logpdf(double x, double mu, double sigma) {
  return -0.5 * std::pow((x - mu) / sigma, 2) - std::log(sigma) - 0.5 * std::log(2 * std::numbers::pi);
}

TEST(SampleParams, DegenerateStdReturnsMean) {
  const Eigen::VectorXd m = Eigen::VectorXd::LinSpaced(5, -1, 1);
  const DiagonalGaussian d{m, Eigen::VectorXd::Constant(5, std::log(1e-30))};
  EXPECT_LE((sample_params(d, 3) - m).cwiseAbs().maxCoeff(), 1e-20);
}

TEST(SampleParams, Deterministic) {
  const auto d = random_gaussian(7, 1);
  EXPECT_EQ(sample_params(d, 11), sample_params(d, 11));
  EXPECT_NE(sample_params(d, 11), sample_params(d, 12));
}

TEST(SampleParams, MeanWithinFourStandardErrors) {
  const auto d = random_gaussian(4, 2);
  const int draws = 100000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(4);
  for (int t = 0; t < draws; ++t) sum += sample_params(d, static_cast<std::uint64_t>(t));
  const Eigen::VectorXd mean = sum / draws;
  const Eigen::VectorXd se = d.std() / std::sqrt(static_cast<double>(draws));
  for (int i = 0; i < 4; ++i) EXPECT_LE(std::abs(mean(i) - d.mean(i)), 4 * se(i));
}

TEST(Kl, ClosedFormExamples) {
  const auto q = random_gaussian(10, 3);
  EXPECT_EQ(kl(q, q), 0.0);
  DiagonalGaussian a{Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Zero(1)};
  DiagonalGaussian b{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};
  EXPECT_NEAR(kl(a, b), 0.5, 1e-15);
  DiagonalGaussian c{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, std::log(0.5))};
  // log 2 + 0.125 - 0.5
  EXPECT_NEAR(kl(c, b), std::log(2.0) + 0.125 - 0.5, 1e-15);
  EXPECT_NEAR(kl(c, b), 0.318147, 1e-6);
}

TEST(Kl, NonNegativeAndZeroOnlyAtEquality) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto q = random_gaussian(6, 100 + s);
    const auto p = random_gaussian(6, 200 + s);
    EXPECT_GT(kl(q, p), 0.0);
    EXPECT_EQ(kl(q, q), 0.0);
  }
}

TEST(Kl, MatchesMonteCarloOneDimension) {
  DiagonalGaussian q{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, std::log(0.5))};
  DiagonalGaussian p{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};
  std::mt19937_64 engine(5);
  std::normal_distribution<double> normal(0.0, 0.5);
  const int draws = 1000000;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int t = 0; t < draws; ++t) {
    const double x = normal(engine);
    const double v = normal_logpdf(x, 0.0, 0.5) - normal_logpdf(x, 0.0, 1.0);
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sum_sq / draws - mean * mean) / draws);
  EXPECT_LE(std::abs(mean - kl(q, p)), 3 * se);
}

TEST(Kl, DimensionMismatchThrows) {
  EXPECT_THROW(kl(random_gaussian(2, 1), random_gaussian(3, 1)), InvalidArgument);
}

TEST(Kl, DecreasesAsMeansApproach) {
  const auto p = isotropic_prior(Eigen::VectorXd::Zero(3), 0.5);
  double prev = INFINITY;
  for (double shift : {2.0, 1.0, 0.5, 0.1, 0.0}) {
    const auto q = isotropic_prior(Eigen::VectorXd::Constant(3, shift), 0.5);
    EXPECT_LT(kl(q, p), prev);
    prev = kl(q, p);
  }
  EXPECT_EQ(prev, 0.0);
}

TEST(Kl, GradientMatchesFiniteDifferences) {
  auto q = random_gaussian(5, 7);
  const auto p = random_gaussian(5, 8);
  const auto g = kl_gradient(q, p);
  const double h = 1e-6;
  for (int i = 0; i < 5; ++i) {
    auto a = q;
    auto b = q;
    a.mean(i) += h;
    b.mean(i) -= h;
    EXPECT_NEAR((kl(a, p) - kl(b, p)) / (2 * h), g.mean(i), 1e-6);
    a = q;
    b = q;
    a.log_std(i) += h;
    b.log_std(i) -= h;
    EXPECT_NEAR((kl(a, p) - kl(b, p)) / (2 * h), g.log_std(i), 1e-6);
  }
}

TEST(LogDensityRatio, Examples) {
  const auto q = random_gaussian(4, 9);
  const Eigen::VectorXd g = Eigen::VectorXd::LinSpaced(4, -2, 2);
  EXPECT_EQ(log_density_ratio(q, q, g), 0.0);
  DiagonalGaussian a{Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Zero(1)};
  DiagonalGaussian b{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};
  const double direct = normal_logpdf(2.0, 1.0, 1.0) - normal_logpdf(2.0, 0.0, 1.0);
  EXPECT_NEAR(log_density_ratio(a, b, Eigen::VectorXd::Constant(1, 2.0)), direct, 1e-14);
  EXPECT_NEAR(direct, 1.5, 1e-14);
}

TEST(LogDensityRatio, ExactlyAntisymmetric) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto q = random_gaussian(8, 300 + s);
    const auto p = random_gaussian(8, 400 + s);
    const Eigen::VectorXd g = sample_params(q, s);
    EXPECT_EQ(log_density_ratio(q, p, g), -log_density_ratio(p, q, g));
  }
}

TEST(LogDensityRatio, AgreesWithLogDensities) {
  const auto q = random_gaussian(6, 10);
  const auto p = random_gaussian(6, 11);
  const Eigen::VectorXd g = sample_params(q, 1);
  EXPECT_NEAR(log_density_ratio(q, p, g), log_density(q, g) - log_density(p, g), 1e-12);
}

TEST(LogDensityRatio, ExpectationIsKl) {
  const auto q = random_gaussian(3, 12);
  const auto p = random_gaussian(3, 13);
  const int draws = 200000;
  double sum = 0.0;
  double sum_sq = 0.0;
  auto engine = rng::stream(1, rng::Tag::kUser);
  for (int t = 0; t < draws; ++t) {
    const double v = log_density_ratio(q, p, sample_reparam(q, engine).value);
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sum_sq / draws - mean * mean) / draws);
  EXPECT_LE(std::abs(mean - kl(q, p)), 3 * se);
}

TEST(IsotropicPrior, StdAndVarianceReadings) {
  const Eigen::VectorXd m = Eigen::VectorXd::Ones(4);
  EXPECT_TRUE(isotropic_prior(m, 1.0).log_std.isZero(0.0));
  EXPECT_EQ(kl(isotropic_prior(m, 0.3), isotropic_prior(m, 0.3)), 0.0);
  EXPECT_NEAR(isotropic_prior(m, 1e-4, Sigma0Meaning::kVariance).std()(0), 1e-2, 1e-16);
  EXPECT_NEAR(isotropic_prior(m, 1e-4, Sigma0Meaning::kStdDev).std()(0), 1e-4, 1e-19);
  EXPECT_THROW(isotropic_prior(m, 0.0), InvalidArgument);
  EXPECT_THROW(isotropic_prior(m, -1.0), InvalidArgument);
}

// d/d(mean) E||g||^2 = 2 mean, d/d(log_std) E||g||^2 = 2 sigma^2.
TEST(Reparameterization, GradientOfSquaredNormMatchesClosedForm) {
  const auto d = random_gaussian(3, 14);
  const int draws = 200000;
  auto engine = rng::stream(2, rng::Tag::kUser);
  Eigen::MatrixXd gm(draws, 3);
  Eigen::MatrixXd gs(draws, 3);
  for (int t = 0; t < draws; ++t) {
    const auto s = sample_reparam(d, engine);
    const auto g = reparam_gradient(d, s, 2.0 * s.value);
    gm.row(t) = g.mean.transpose();
    gs.row(t) = g.log_std.transpose();
  }
  const Eigen::VectorXd sigma = d.std();
  for (int i = 0; i < 3; ++i) {
    for (auto [col, expected] : {std::pair{gm.col(i), 2 * d.mean(i)}, std::pair{gs.col(i), 2 * sigma(i) * sigma(i)}}) {
      const double mean = col.mean();
      const double se = std::sqrt((col.array() - mean).square().sum() / (draws - 1) / draws);
      EXPECT_LE(std::abs(mean - expected), 4 * se);
    }
  }
}

TEST(Csv, RoundTrip) {
  const auto d = random_gaussian(12, 15);
  std::stringstream ss;
  write_csv(ss, d);
  const auto back = read_csv(ss);
  EXPECT_EQ(back.mean, d.mean);
  EXPECT_EQ(back.log_std, d.log_std);
}

}  // namespace
}  // namespace pacgen::probdist
