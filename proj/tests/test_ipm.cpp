#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "pacgen/ipm.hpp"
#include "pacgen/synthdata.hpp"

namespace pacgen::ipm {
namespace {

Matrix random_points(Eigen::Index n, std::uint64_t seed, double shift = 0.0) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(n, 2);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(engine) + shift;
  return m;
}

CriticState random_critic(const NetArchitecture& arch, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ParamVector p(arch.num_params());
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = normal(engine);
  return {arch, p, kDefaultBjorckIterations, CriticMode::kLipschitz, {}};
}

// f(x) = x_1 as a single linear layer.
CriticState first_coordinate_critic() {
  ParamVector p(3);
  p << 1.0, 0.0, 0.0;
  return {NetArchitecture{{2, 1}}, p, kDefaultBjorckIterations, CriticMode::kLipschitz, {}};
}

TEST(CriticGap, IdenticalSetsGiveZero) {
  const auto c = random_critic(NetArchitecture{{2, 16, 16, 1}}, 1);
  const Matrix x = random_points(20, 2);
  EXPECT_EQ(critic_gap(c, x, x), 0.0);
}

TEST(CriticGap, LinearCritic) {
  Matrix real(2, 2);
  real << 0.5, 3.0, 1.5, -1.0;
  Matrix fake(2, 2);
  fake << -0.5, 0.0, 0.5, 7.0;
  EXPECT_NEAR(critic_gap(first_coordinate_critic(), real, fake), 1.0, 1e-15);
}

TEST(CriticGap, EmptyBatchThrows) {
  EXPECT_THROW(critic_gap(first_coordinate_critic(), Matrix(0, 2), random_points(2, 1)), InvalidArgument);
}

TEST(CriticGap, BoundedByExactWasserstein) {
  const NetArchitecture arch{{2, 16, 16, 1}};
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(s % 7);
    const Matrix real = random_points(n, 10 + s);
    const Matrix fake = random_points(n, 50 + s, 0.7);
    const double w1 = oracle::wasserstein1_bruteforce(real, fake);
    auto c = random_critic(arch, 90 + s);
    EXPECT_LE(std::abs(critic_gap(c, real, fake)), w1 * (1 + 1e-9));
    auto [trained, gap] = maximize_critic(c, real, fake, 100, 1e-2, s);
    EXPECT_LE(gap, w1 * (1 + 1e-9));
  }
}

TEST(TapeCriticGap, MatchesNumericGap) {
  const NetArchitecture arch{{2, 8, 8, 1}};
  auto c = random_critic(arch, 3);
  const Matrix real = random_points(5, 4);
  const Matrix fake = random_points(7, 5, 1.0);
  ad::Tape t;
  const double tape_gap = critic_gap(t, c, t.constant(c.raw_params), real, fake).scalar();
  EXPECT_NEAR(tape_gap, critic_gap(c, real, fake), 1e-12);
}

TEST(MaximizeCritic, ZeroStepsGivesAbsoluteInitialGap) {
  const auto c = random_critic(NetArchitecture{{2, 8, 8, 1}}, 4);
  const Matrix real = random_points(10, 1);
  const Matrix fake = random_points(10, 2, 1.0);
  auto [out, gap] = maximize_critic(c, real, fake, 0, 1e-3, 0);
  EXPECT_DOUBLE_EQ(gap, std::abs(critic_gap(c, real, fake)));
  EXPECT_GE(critic_gap(out, real, fake), 0.0);
}

TEST(MaximizeCritic, IdenticalSetsGiveZero) {
  const auto c = random_critic(NetArchitecture{{2, 8, 8, 1}}, 5);
  const Matrix x = random_points(10, 1);
  EXPECT_EQ(maximize_critic(c, x, x, 20, 1e-3, 0).second, 0.0);
}

TEST(MaximizeCritic, AscentImprovesOnSeparatedClouds) {
  const NetArchitecture arch{{2, 16, 16, 1}};
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Matrix real = random_points(32, 100 + s);
    const Matrix fake = random_points(32, 200 + s, 3.0);
    const auto c = make_critic(arch, s);
    const double before = maximize_critic(c, real, fake, 0, 1e-3, s).second;
    const double after = maximize_critic(c, real, fake, 500, 1e-3, s).second;
    EXPECT_GE(after, before);
  }
}

TEST(MaximizeCritic, NegationKeepsGapNonNegative) {
  auto c = random_critic(NetArchitecture{{2, 8, 1}}, 6);
  const Matrix real = random_points(10, 1);
  const Matrix fake = random_points(10, 2, 2.0);
  const double g = critic_gap(c, real, fake);
  c.negate();
  EXPECT_NEAR(critic_gap(c, real, fake), -g, 1e-12);
}

TEST(ExactIpm, LinearFamilyExample) {
  const std::vector<PointFunction> fam = symmetrize({linear_functional({1.0, 0.0})});
  Matrix real(2, 2);
  real << 0, 0, 1, 0;
  Matrix fake(2, 2);
  fake << 2, 0, 3, 0;
  EXPECT_DOUBLE_EQ(exact_ipm_finite_family(fam, real, fake), 2.0);
  EXPECT_DOUBLE_EQ(exact_ipm_finite_family(fam, real, real), 0.0);
}

TEST(ExactIpm, MatchesBruteForceEnumeration) {
  std::mt19937_64 engine(7);
  std::uniform_real_distribution<double> angle(0.0, 6.283185307179586);
  for (int t = 0; t < 20; ++t) {
    std::vector<Eigen::Vector2d> dirs;
    std::vector<PointFunction> fam;
    for (int k = 0; k < 8; ++k) {
      const double a = angle(engine);
      dirs.emplace_back(std::cos(a), std::sin(a));
      fam.push_back(linear_functional(dirs.back()));
    }
    const Matrix real = random_points(4, 300 + t);
    const Matrix fake = random_points(4, 400 + t, 0.5);
    double best = -INFINITY;
    for (const auto& d : dirs) {
      double v = 0.0;
      for (int i = 0; i < 4; ++i) v += (d.dot(real.row(i).transpose()) - d.dot(fake.row(i).transpose())) / 4.0;
      best = std::max(best, v);
    }
    EXPECT_NEAR(exact_ipm_finite_family(fam, real, fake), best, 1e-14);
  }
}

TEST(ExactIpm, LowerBoundsWasserstein) {
  auto fam = symmetrize({linear_functional({1.0, 0.0}), linear_functional({0.0, 1.0}),
                         linear_functional({std::sqrt(0.5), std::sqrt(0.5)}), distance_to({0.0, 0.0})});
  for (std::uint64_t s = 0; s < 30; ++s) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(s % 8);
    const Matrix real = random_points(n, 500 + s);
    const Matrix fake = random_points(n, 600 + s, 0.3);
    EXPECT_LE(exact_ipm_finite_family(fam, real, fake), oracle::wasserstein1_bruteforce(real, fake) + 1e-12);
  }
}

TEST(ExactIpm, EmptyFamilyThrows) {
  EXPECT_THROW(exact_ipm_finite_family({}, random_points(2, 1), random_points(2, 2)), InvalidArgument);
}

TEST(EmpiricalRisk, MemorizingGeneratorHasZeroRisk) {
  const Matrix real = random_points(16, 8);
  const auto c = random_critic(NetArchitecture{{2, 8, 8, 1}}, 9);
  auto memorize = [&](const Matrix&) { return real; };
  EXPECT_EQ(empirical_risk(memorize, LatentSpec{}, real, neural_discrepancy(c.snapshot()), 4, 1), 0.0);
}

TEST(EmpiricalRisk, ReproducibleAndMatchesEnumeration) {
  const NetArchitecture gen{{2, 8, 2}, lipnet::Activation::kGroupSort, 2};
  auto engine = rng::stream(1, rng::Tag::kGeneratorInit);
  const ParamVector g = lipnet::init_uniform(gen, engine);
  const Matrix real = random_points(6, 10);
  auto fam = symmetrize({linear_functional({1.0, 0.0}), linear_functional({0.0, 1.0})});
  const double a = empirical_risk(gen, g, LatentSpec{}, real, finite_family_discrepancy(fam), 3, 77);
  const double b = empirical_risk(gen, g, LatentSpec{}, real, finite_family_discrepancy(fam), 3, 77);
  EXPECT_EQ(a, b);
  double manual = 0.0;
  for (int r = 0; r < 3; ++r) {
    auto e = rng::stream(77, rng::Tag::kUser, static_cast<std::uint64_t>(r));
    const Matrix fake = lipnet::forward(gen, g, LatentSpec{}.sample(6, e));
    double best = -INFINITY;
    for (const auto& f : fam) {
      double v = 0.0;
      for (int i = 0; i < 6; ++i) v += (f(real.row(i).transpose()) - f(fake.row(i).transpose())) / 6.0;
      best = std::max(best, v);
    }
    manual += best / 3.0;
  }
  EXPECT_NEAR(a, manual, 1e-14);
}

TEST(EmpiricalRisk, NonNegativeForNeuralCritic) {
  const NetArchitecture gen{{2, 8, 2}};
  auto engine = rng::stream(2, rng::Tag::kGeneratorInit);
  const ParamVector g = lipnet::init_uniform(gen, engine);
  const auto c = random_critic(NetArchitecture{{2, 8, 8, 1}}, 11);
  EXPECT_GE(empirical_risk(gen, g, LatentSpec{}, random_points(10, 3), neural_discrepancy(c.snapshot()), 5, 3), 0.0);
}

TEST(BoundedDifferences, SamePointGivesZeroChange) {
  const auto c = random_critic(NetArchitecture{{2, 8, 8, 1}}, 12).snapshot();
  const Matrix real = random_points(5, 1);
  const Matrix fake = random_points(5, 2);
  for (Eigen::Index i = 0; i < 10; ++i) {
    const Eigen::Vector2d same = i < 5 ? Eigen::Vector2d(real.row(i)) : Eigen::Vector2d(fake.row(i - 5));
    EXPECT_EQ(single_point_change(c, real, fake, i, same, DifferenceMode::kLipschitz), 0.0);
  }
}

TEST(BoundedDifferences, LinearCriticIsTightAtSegmentEnds) {
  // Points on a segment of length 2 along x; f(x) = x_1; n = 4.
  const auto f = first_coordinate_critic().snapshot();
  Matrix real(4, 2);
  real << -1, 0, -1, 0, -1, 0, -1, 0;
  Matrix fake(4, 2);
  fake << -1, 0, -1, 0, -1, 0, -1, 0;
  const double change = single_point_change(f, real, fake, 0, Eigen::Vector2d(1.0, 0.0), DifferenceMode::kLipschitz);
  EXPECT_NEAR(change, 2.0 / 4.0, 1e-15);
  EXPECT_TRUE(bounded_diff_check(f, real, fake, 0, Eigen::Vector2d(1.0, 0.0), 2.0));
  EXPECT_FALSE(bounded_diff_check(f, real, fake, 0, Eigen::Vector2d(1.0, 0.0), 1.9));
}

TEST(BoundedDifferences, RandomizedSweepOnRingData) {
  const auto spec = synthdata::ring8_spec();
  const double diam = synthdata::diameter(spec);
  const Matrix real = synthdata::sample(spec, 32, 1).points;
  const Matrix fake = synthdata::sample(spec, 32, 2).points * 0.5;
  auto [c, gap] = maximize_critic(make_critic(NetArchitecture{{2, 16, 16, 1}}, 3), real, fake, 200, 1e-3, 4);
  const auto f = c.snapshot();
  std::mt19937_64 engine(5);
  std::uniform_int_distribution<Eigen::Index> pick(0, 63);
  std::uniform_real_distribution<double> u(-3.2, 3.2);
  int tried = 0;
  while (tried < 2000) {
    Eigen::Vector2d p(u(engine), u(engine));
    if (p.norm() > 3.2) continue;
    ++tried;
    const auto idx = pick(engine);
    EXPECT_TRUE(bounded_diff_check(f, real, fake, idx, p, diam, DifferenceMode::kLipschitz));
    EXPECT_TRUE(bounded_diff_check(f, real, fake, idx, p, diam, DifferenceMode::kTotalVariation));
  }
}

TEST(BoundedDifferences, ClippedModeUsesTwoOverN) {
  // An unclipped 1-Lipschitz f with a large range can move the gap by more
  // than 2/n; clipping to [-1, 1] restores the bound.
  const auto f = first_coordinate_critic().snapshot();
  Matrix real = Matrix::Zero(4, 2);
  real.col(0) << -3.0, 3.0, 3.0, 3.0;
  const Matrix fake = Matrix::Zero(4, 2);
  const Eigen::Vector2d rep(3.0, 0.0);
  EXPECT_NEAR(single_point_change(f, real, fake, 0, rep, DifferenceMode::kLipschitz), 6.0 / 4.0, 1e-15);
  EXPECT_NEAR(single_point_change(f, real, fake, 0, rep, DifferenceMode::kTotalVariation), 2.0 / 4.0, 1e-15);
  EXPECT_TRUE(bounded_diff_check(f, real, fake, 0, rep, 6.4, DifferenceMode::kTotalVariation));
  EXPECT_FALSE(bounded_diff_check(f, real, fake, 0, rep, 5.9, DifferenceMode::kLipschitz));
}

TEST(Latent, UniformInUnitCube) {
  auto e = rng::stream(1, rng::Tag::kUser);
  const Matrix z = LatentSpec{3, LatentKind::kUniform}.sample(1000, e);
  EXPECT_EQ(z.cols(), 3);
  EXPECT_GE(z.minCoeff(), 0.0);
  EXPECT_LT(z.maxCoeff(), 1.0);
}

}  // namespace
}  // namespace pacgen::ipm
