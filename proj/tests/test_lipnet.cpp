#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "pacgen/lipnet.hpp"

namespace pacgen::lipnet {
namespace {

ParamVector random_params(const NetArchitecture& arch, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, scale);
  ParamVector p(arch.num_params());
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = normal(engine);
  return p;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(engine);
  return m;
}

std::vector<long> as_long(const std::vector<Eigen::Index>& w) { return {w.begin(), w.end()}; }

TEST(Architecture, ParamCountAndValidation) {
  const NetArchitecture a{{2, 64, 64, 1}};
  EXPECT_EQ(a.num_params(), 64 * 2 + 64 + 64 * 64 + 64 + 64 + 1);
  EXPECT_THROW((NetArchitecture{{2}}.validate()), InvalidArgument);
  EXPECT_THROW((NetArchitecture{{2, 3, 1}}.validate()), InvalidArgument);
  EXPECT_NO_THROW((NetArchitecture{{2, 3, 1}, Activation::kReLU}.validate()));
  EXPECT_FALSE((NetArchitecture{{2, 4, 1}, Activation::kReLU}.certified()));
}

TEST(Forward, ZeroParamsGiveZeroOutput) {
  const NetArchitecture a{{2, 8, 8, 2}};
  const Matrix out = forward(a, ParamVector::Zero(a.num_params()), random_matrix(5, 2, 1));
  EXPECT_TRUE(out.isZero(0.0));
}

TEST(Forward, IdentityLayer) {
  const NetArchitecture a{{2, 2}};
  ParamVector p(6);
  p << 1, 0, 0, 1, 0, 0;
  const Matrix x = random_matrix(7, 2, 2);
  EXPECT_TRUE(forward(a, p, x) == x);
}

TEST(Forward, MatchesReferenceEvaluator) {
  for (auto act : {Activation::kGroupSort, Activation::kReLU}) {
    const NetArchitecture a{{2, 6, 4, 3}, act, 2};
    for (std::uint64_t s = 0; s < 5; ++s) {
      const ParamVector p = random_params(a, s);
      const Matrix x = random_matrix(9, 2, 100 + s);
      const Matrix out = forward(a, p, x);
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Eigen::VectorXd ref =
            oracle::mlp_reference(as_long(a.widths), p, x.row(i).transpose(), act == Activation::kGroupSort, 2);
        EXPECT_LE((out.row(i).transpose() - ref).cwiseAbs().maxCoeff(), 1e-12);
      }
    }
  }
}

TEST(Forward, RejectsMismatchedInputs) {
  const NetArchitecture a{{2, 4, 1}};
  EXPECT_THROW(forward(a, ParamVector::Zero(3), random_matrix(2, 2, 0)), InvalidArgument);
  EXPECT_THROW(forward(a, ParamVector::Zero(a.num_params()), random_matrix(2, 3, 0)), InvalidArgument);
}

TEST(GroupSort, SortsPairs) {
  Eigen::VectorXd v(4);
  v << 3, 1, 4, 2;
  Eigen::VectorXd expected(4);
  expected << 1, 3, 2, 4;
  EXPECT_EQ(groupsort(v, 2), expected);
  EXPECT_EQ(groupsort(expected, 2), expected);
  Eigen::VectorXd g4(4);
  g4 << 1, 2, 3, 4;
  EXPECT_EQ(groupsort(v, 4), g4);
  EXPECT_THROW(groupsort(v, 3), InvalidArgument);
}

TEST(GroupSort, OneLipschitzAndNormPreserving) {
  std::mt19937_64 engine(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    Eigen::VectorXd x(8);
    Eigen::VectorXd y(8);
    for (int i = 0; i < 8; ++i) {
      x(i) = normal(engine);
      y(i) = normal(engine);
    }
    const auto gx = groupsort(x, 2);
    EXPECT_LE((gx - groupsort(y, 2)).norm(), (x - y).norm() + 1e-15);
    EXPECT_NEAR(gx.squaredNorm(), x.squaredNorm(), 1e-12);
  }
}

TEST(Bjorck, OrthonormalInputIsFixedPoint) {
  const Matrix q = Eigen::HouseholderQR<Matrix>(random_matrix(16, 16, 4)).householderQ();
  EXPECT_LE((bjorck(q, 30) - q).cwiseAbs().maxCoeff(), 1e-12);
  const Matrix tall = Matrix(Eigen::HouseholderQR<Matrix>(random_matrix(12, 5, 5)).householderQ()).leftCols(5);
  EXPECT_LE((bjorck(tall, 30) - tall).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Bjorck, DiagonalGoesToIdentity) {
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 0.9;
  d(1, 1) = 0.5;
  EXPECT_LE((bjorck(d, 30) - oracle::polar_factor(d)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((bjorck(d, 30) - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Bjorck, MatchesPolarFactorOnRandomMatrices) {
  for (auto [r, c] : std::vector<std::pair<int, int>>{{32, 16}, {16, 32}, {64, 64}, {8, 2}, {1, 6}}) {
    const Matrix w = random_matrix(r, c, 10 + r + c);
    const Matrix out = bjorck(w, 30);
    EXPECT_LE(gram_error(out), 1e-6) << r << "x" << c;
    EXPECT_LE((out - oracle::polar_factor(w)).cwiseAbs().maxCoeff(), 1e-6) << r << "x" << c;
  }
}

TEST(Bjorck, GramErrorWithinThirtyIterationsUpTo64) {
  for (int size : {2, 4, 8, 16, 32, 64}) {
    for (std::uint64_t s = 0; s < 5; ++s) {
      EXPECT_LE(gram_error(bjorck(random_matrix(size, size, 1000 * size + s), 30)), 1e-6);
    }
  }
}

TEST(Bjorck, ZeroMatrixMapsToItself) { EXPECT_TRUE(bjorck(Matrix::Zero(3, 4), 30).isZero(0.0)); }

TEST(Bjorck, RejectsNonFinite) {
  Matrix w = Matrix::Ones(2, 2);
  w(0, 1) = NAN;
  EXPECT_THROW(bjorck(w, 5), InvalidArgument);
}

TEST(CriticForward, EmpiricallyOneLipschitz) {
  const NetArchitecture a{{2, 32, 32, 1}};
  std::mt19937_64 engine(8);
  std::uniform_real_distribution<double> u(-3.2, 3.2);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const ParamVector raw = random_params(a, 50 + s);
    Matrix x(1000, 2);
    Matrix y(1000, 2);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      x.data()[i] = u(engine);
      y.data()[i] = u(engine);
    }
    const Matrix fx = critic_forward(a, raw, x, 25);
    const Matrix fy = critic_forward(a, raw, y, 25);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      EXPECT_LE(std::abs(fx(i, 0) - fy(i, 0)), (x.row(i) - y.row(i)).norm() * (1.0 + 1e-6));
    }
  }
}

TEST(CriticForward, ZeroWeightsGiveBiasOnlyOutput) {
  const NetArchitecture a{{2, 4, 1}};
  ParamVector raw = ParamVector::Zero(a.num_params());
  raw(a.num_params() - 1) = 0.75;
  const Matrix out = critic_forward(a, raw, random_matrix(6, 2, 3), 10);
  EXPECT_TRUE((out.array() == 0.75).all());
}

TEST(CriticForward, MatchesForwardOnOrthonormalParams) {
  const NetArchitecture a{{2, 8, 8, 1}};
  const ParamVector proj = project_weights(a, random_params(a, 77), 30);
  const Matrix x = random_matrix(10, 2, 4);
  EXPECT_LE((critic_forward(a, proj, x, 30) - forward(a, proj, x)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TapeForward, MatchesNumericForward) {
  const NetArchitecture a{{2, 8, 8, 1}};
  const ParamVector p = random_params(a, 5);
  const Matrix x = random_matrix(7, 2, 6);
  ad::Tape t;
  EXPECT_LE((forward(a, t.constant(p), t.constant(x)).value() - forward(a, p, x)).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LE((critic_forward(a, t.constant(p), t.constant(x), 25).value() - critic_forward(a, p, x, 25))
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
}

TEST(Gradient, ConstantLossHasZeroGradient) {
  const NetArchitecture a{{2, 4, 1}};
  const ParamVector g = gradient(a, random_params(a, 1), [](ad::Tape& t, ad::Var) { return t.constant(Matrix::Ones(1, 1)); });
  EXPECT_TRUE(g.isZero(0.0));
}

TEST(Gradient, QuadraticLossGivesParams) {
  const NetArchitecture a{{2, 4, 1}};
  const ParamVector p = random_params(a, 2);
  const ParamVector g = gradient(a, p, [](ad::Tape&, ad::Var q) { return 0.5 * ad::dot(q, q); });
  EXPECT_LE((g - p).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Gradient, NonFiniteLossThrows) {
  const NetArchitecture a{{2, 4, 1}};
  EXPECT_THROW(value_and_gradient(a, random_params(a, 2),
                                  [](ad::Tape& t, ad::Var) { return t.constant(Matrix::Constant(1, 1, NAN)); }),
               DivergenceError);
}

// Central differences with step 1e-5, relative error 1e-4 on coordinates
// whose derivative exceeds 1e-8.
template <class Loss, class Value>
void expect_matches_finite_differences(const NetArchitecture& a, const ParamVector& p, Loss loss, Value value) {
  const ParamVector g = gradient(a, p, loss);
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    ParamVector plus = p;
    ParamVector minus = p;
    plus(i) += h;
    minus(i) -= h;
    const double fd = (value(plus) - value(minus)) / (2 * h);
    if (std::abs(fd) <= 1e-8 && std::abs(g(i)) <= 1e-8) continue;
    EXPECT_LE(std::abs(fd - g(i)), 1e-4 * std::max(std::abs(fd), std::abs(g(i)))) << "coordinate " << i;
  }
}

TEST(Gradient, MlpMatchesFiniteDifferences) {
  for (auto act : {Activation::kGroupSort, Activation::kReLU}) {
    const NetArchitecture a{{2, 6, 6, 2}, act, 2};
    for (std::uint64_t s = 0; s < 3; ++s) {
      const ParamVector p = random_params(a, 20 + s);
      const Matrix x = random_matrix(5, 2, 30 + s);
      const Matrix target = random_matrix(5, 2, 40 + s);
      expect_matches_finite_differences(
          a, p,
          [&](ad::Tape& t, ad::Var q) {
            ad::Var out = forward(a, q, t.constant(x));
            ad::Var d = out - t.constant(target);
            return ad::mean(ad::cwise_product(d, d));
          },
          [&](const ParamVector& q) { return (forward(a, q, x) - target).array().square().mean(); });
    }
  }
}

TEST(Gradient, CriticThroughBjorckMatchesFiniteDifferences) {
  const NetArchitecture a{{2, 6, 6, 1}};
  for (std::uint64_t s = 0; s < 3; ++s) {
    const ParamVector p = random_params(a, 60 + s);
    const Matrix x = random_matrix(6, 2, 70 + s);
    Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(6, -1.0, 1.0);
    expect_matches_finite_differences(
        a, p,
        [&](ad::Tape& t, ad::Var q) { return ad::dot(critic_forward(a, q, t.constant(x), 25), t.constant(w)); },
        [&](const ParamVector& q) { return critic_forward(a, q, x, 25).col(0).dot(w); });
  }
}

TEST(Init, OrthogonalWeightsAndZeroBias) {
  const NetArchitecture a{{2, 16, 16, 1}};
  std::mt19937_64 engine(1);
  const ParamVector p = init_orthogonal(a, engine);
  for (const auto& ly : layout(a)) {
    Eigen::Map<const RowMajorMatrix> w(p.data() + ly.weight_offset, ly.rows, ly.cols);
    EXPECT_LE(gram_error(w), 1e-12);
    EXPECT_TRUE(p.segment(ly.bias_offset, ly.rows).isZero(0.0));
  }
}

TEST(Serialization, ParamsAndArchitectureRoundTrip) {
  const NetArchitecture a{{2, 8, 4, 2}, Activation::kReLU, 2};
  const ParamVector p = random_params(a, 9);
  std::stringstream ss;
  write_params_csv(ss, p);
  EXPECT_EQ(read_params_csv(ss), p);
  std::stringstream arch_text(format_architecture(a));
  EXPECT_EQ(parse_architecture(arch_text), a);
}

}  // namespace
}  // namespace pacgen::lipnet
