#pragma once

// Property-check suites behind `pacgen check`. Each suite returns one row per
// property; the CLI prints them as a PASS/FAIL table.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pacgen/pacgen.hpp"

namespace pacgen::checks {

struct CheckRow {
  std::string name;
  bool pass = false;
  std::string detail;
};

using Matrix = Eigen::MatrixXd;
using lipnet::ParamVector;

namespace impl {

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

template <class Engine>
Eigen::Vector2d point_in_disc(double radius, Engine& engine) {
  std::uniform_real_distribution<double> u(-radius, radius);
  while (true) {
    Eigen::Vector2d p(u(engine), u(engine));
    if (p.norm() <= radius) return p;
  }
}

template <class Engine>
ParamVector random_params(Eigen::Index size, double scale, Engine& engine) {
  std::normal_distribution<double> normal(0.0, scale);
  ParamVector p(size);
  for (Eigen::Index i = 0; i < size; ++i) p(i) = normal(engine);
  return p;
}

}  // namespace impl

/// 10 random certified critics, 1000 point pairs each in the ring-8 disc.
inline std::vector<CheckRow> lipschitz_suite(std::uint64_t seed) {
  std::vector<CheckRow> rows;
  const lipnet::NetArchitecture arch{{2, 64, 64, 1}};
  const double radius = 3.2;
  for (int c = 0; c < 10; ++c) {
    auto engine = rng::stream(seed, rng::Tag::kCheck, static_cast<std::uint64_t>(c));
    const ParamVector raw = impl::random_params(arch.num_params(), 1.0, engine);
    const ParamVector proj = lipnet::project_weights(arch, raw, ipm::kDefaultBjorckIterations);
    double worst_gram = 0.0;
    for (const auto& ly : lipnet::layout(arch)) {
      Eigen::Map<const lipnet::RowMajorMatrix> w(proj.data() + ly.weight_offset, ly.rows, ly.cols);
      worst_gram = std::max(worst_gram, lipnet::gram_error(w));
    }
    Matrix xs(1000, 2);
    Matrix ys(1000, 2);
    for (int i = 0; i < 1000; ++i) {
      xs.row(i) = impl::point_in_disc(radius, engine).transpose();
      ys.row(i) = impl::point_in_disc(radius, engine).transpose();
    }
    const Matrix fx = lipnet::forward(arch, proj, xs);
    const Matrix fy = lipnet::forward(arch, proj, ys);
    int violations = 0;
    double worst_ratio = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const double dist = (xs.row(i) - ys.row(i)).norm();
      const double diff = std::abs(fx(i, 0) - fy(i, 0));
      if (diff > dist * (1.0 + 1e-6)) ++violations;
      if (dist > 0.0) worst_ratio = std::max(worst_ratio, diff / dist);
    }
    rows.push_back({"lipschitz critic " + std::to_string(c), violations == 0 && worst_gram <= 1e-6,
                    "violations=" + std::to_string(violations) + " max|df|/|dx|=" + impl::fmt(worst_ratio) +
                        " gram_err=" + impl::fmt(worst_gram)});
  }
  return rows;
}

/// Gram error of pre-scaled random matrices after at most 30 iterations,
/// plus the fixed-point and polar-factor cases.
inline std::vector<CheckRow> bjorck_suite(std::uint64_t seed) {
  std::vector<CheckRow> rows;
  auto engine = rng::stream(seed, rng::Tag::kCheck, 100);
  const std::vector<std::pair<int, int>> shapes = {{2, 2}, {8, 8}, {32, 16}, {16, 32}, {64, 64}, {64, 2}, {1, 64}};
  for (auto [r, c] : shapes) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix w(r, c);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(engine);
    const double err = lipnet::gram_error(lipnet::bjorck(w, 30));
    rows.push_back({"bjorck random " + std::to_string(r) + "x" + std::to_string(c), err <= 1e-6,
                    "gram_err=" + impl::fmt(err)});
  }
  {
    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 0.9;
    d(1, 1) = 0.5;
    const double err = (lipnet::bjorck(d, 30) - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff();
    rows.push_back({"bjorck diag(0.9,0.5) -> I", err <= 1e-6, "max_abs_err=" + impl::fmt(err)});
  }
  {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix g(16, 16);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(engine);
    const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
    const double err = (lipnet::bjorck(q, 30) - q).cwiseAbs().maxCoeff();
    rows.push_back({"bjorck orthonormal fixed point", err <= 1e-12, "max_abs_err=" + impl::fmt(err)});
  }
  {
    const Matrix z = Matrix::Zero(4, 3);
    rows.push_back({"bjorck zero matrix", lipnet::bjorck(z, 30).isZero(0.0), ""});
  }
  return rows;
}

/// Closed-form KL against Monte-Carlo E_q[log q - log p] with 10^6 draws.
inline std::vector<CheckRow> kl_suite(std::uint64_t seed) {
  std::vector<CheckRow> rows;
  const int dims[] = {1, 10, 100};
  const int draws = 1'000'000;
  for (int k = 0; k < 10; ++k) {
    const int dim = dims[k % 3];
    auto engine = rng::stream(seed, rng::Tag::kCheck, 200 + static_cast<std::uint64_t>(k));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> ls(-1.0, 0.5);
    probdist::DiagonalGaussian q{Eigen::VectorXd(dim), Eigen::VectorXd(dim)};
    probdist::DiagonalGaussian p{Eigen::VectorXd(dim), Eigen::VectorXd(dim)};
    for (int i = 0; i < dim; ++i) {
      q.mean(i) = normal(engine);
      p.mean(i) = normal(engine);
      q.log_std(i) = ls(engine);
      p.log_std(i) = ls(engine);
    }
    const double exact = probdist::kl(q, p);
    double sum = 0.0;
    double sum_sq = 0.0;
    Eigen::VectorXd g(dim);
    const Eigen::VectorXd sq = q.std();
    for (int t = 0; t < draws; ++t) {
      for (int i = 0; i < dim; ++i) g(i) = q.mean(i) + sq(i) * normal(engine);
      const double v = probdist::log_density_ratio(q, p, g);
      sum += v;
      sum_sq += v * v;
    }
    const double mean = sum / draws;
    const double se = std::sqrt(std::max(0.0, sum_sq / draws - mean * mean) / draws);
    const bool ok = std::abs(mean - exact) <= 3.0 * se;
    rows.push_back({"kl pair " + std::to_string(k) + " (dim " + std::to_string(dim) + ")", ok,
                    "closed=" + impl::fmt(exact) + " mc=" + impl::fmt(mean) + " se=" + impl::fmt(se)});
  }
  return rows;
}

/// Analytic gradient of a critic gap through forward, GroupSort and unrolled
/// Björck against central differences with step 1e-5.
inline std::vector<CheckRow> gradients_suite(std::uint64_t seed) {
  std::vector<CheckRow> rows;
  const lipnet::NetArchitecture arch{{2, 8, 8, 1}};
  for (int s = 0; s < 10; ++s) {
    auto engine = rng::stream(seed, rng::Tag::kCheck, 300 + static_cast<std::uint64_t>(s));
    const ParamVector raw = impl::random_params(arch.num_params(), 1.0, engine);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix real(6, 2);
    Matrix fake(6, 2);
    for (Eigen::Index i = 0; i < real.size(); ++i) real.data()[i] = normal(engine);
    for (Eigen::Index i = 0; i < fake.size(); ++i) fake.data()[i] = 2.0 + normal(engine);
    ipm::CriticState critic{arch, raw, ipm::kDefaultBjorckIterations, ipm::CriticMode::kLipschitz, {}};
    const ParamVector grad = lipnet::gradient(arch, raw, [&](ad::Tape& t, ad::Var p) {
      return ipm::critic_gap(t, critic, p, real, fake);
    });
    auto value = [&](const ParamVector& p) {
      return ipm::critic_gap(ipm::ProjectedCritic(arch, lipnet::project_weights(arch, p, critic.bjorck_iterations),
                                                  ipm::CriticMode::kLipschitz),
                             real, fake);
    };
    int checked = 0;
    int bad = 0;
    double worst = 0.0;
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
      ParamVector plus = raw;
      ParamVector minus = raw;
      plus(i) += h;
      minus(i) -= h;
      const double fd = (value(plus) - value(minus)) / (2.0 * h);
      if (std::abs(grad(i)) <= 1e-8 && std::abs(fd) <= 1e-8) continue;
      ++checked;
      const double rel = std::abs(fd - grad(i)) / std::max(std::abs(fd), std::abs(grad(i)));
      worst = std::max(worst, rel);
      if (rel > 1e-4) ++bad;
    }
    rows.push_back({"gradient seed " + std::to_string(s), bad == 0,
                    "coords=" + std::to_string(checked) + " max_rel_err=" + impl::fmt(worst)});
  }
  return rows;
}

/// 10^4 single-point perturbations per critic, Lipschitz and clipped modes.
inline std::vector<CheckRow> bounded_diff_suite(std::uint64_t seed) {
  std::vector<CheckRow> rows;
  const auto spec = synthdata::ring8_spec();
  const double diam = synthdata::diameter(spec);
  const lipnet::NetArchitecture arch{{2, 32, 32, 1}};
  const std::size_t n = 64;
  const auto real = synthdata::sample(spec, n, rng::derive(seed, rng::Tag::kCheck, 400));
  const auto fake = synthdata::sample(synthdata::grid25_spec(), 4 * n, rng::derive(seed, rng::Tag::kCheck, 401));
  Matrix fake_in(n, 2);
  std::size_t taken = 0;
  for (Eigen::Index i = 0; i < fake.points.rows() && taken < n; ++i) {
    if (fake.points.row(i).norm() <= 3.2) fake_in.row(static_cast<Eigen::Index>(taken++)) = fake.points.row(i);
  }
  fake_in.conservativeResize(static_cast<Eigen::Index>(taken), 2);
  Matrix real_pts = real.points.topRows(fake_in.rows());

  auto trained = ipm::make_critic(arch, rng::derive(seed, rng::Tag::kCheck, 402));
  trained = ipm::maximize_critic(trained, real_pts, fake_in, 200, 1e-3, seed).first;
  auto engine = rng::stream(seed, rng::Tag::kCheck, 403);
  const ParamVector raw = impl::random_params(arch.num_params(), 1.0, engine);
  const ipm::CriticState random_critic{arch, raw, ipm::kDefaultBjorckIterations, ipm::CriticMode::kLipschitz, {}};

  struct Case {
    std::string name;
    ipm::ProjectedCritic f;
  };
  const std::vector<Case> cases = {{"trained", trained.snapshot()}, {"random", random_critic.snapshot()}};
  for (const auto& c : cases) {
    for (auto mode : {ipm::DifferenceMode::kLipschitz, ipm::DifferenceMode::kTotalVariation}) {
      std::uniform_int_distribution<Eigen::Index> pick(0, 2 * real_pts.rows() - 1);
      int violations = 0;
      double worst = 0.0;
      const double bound = mode == ipm::DifferenceMode::kLipschitz ? diam / static_cast<double>(real_pts.rows())
                                                                   : 2.0 / static_cast<double>(real_pts.rows());
      for (int t = 0; t < 10'000; ++t) {
        const Eigen::Index idx = pick(engine);
        const Eigen::Vector2d rep = impl::point_in_disc(3.2, engine);
        if (!ipm::bounded_diff_check(c.f, real_pts, fake_in, idx, rep, diam, mode)) ++violations;
        worst = std::max(worst, ipm::single_point_change(c.f, real_pts, fake_in, idx, rep, mode));
      }
      const std::string mode_name = mode == ipm::DifferenceMode::kLipschitz ? "lipschitz" : "tv";
      rows.push_back({"bounded differences " + c.name + " " + mode_name, violations == 0,
                      "violations=" + std::to_string(violations) + " max_change=" + impl::fmt(worst) +
                          " bound=" + impl::fmt(bound)});
    }
  }
  return rows;
}

/// Unit-square mixtures used by the exponential-moment checks.
inline synthdata::MixtureSpec unit_square_mixture(bool shifted) {
  synthdata::MixtureSpec s;
  s.truncation = synthdata::Square{{0.5, 0.5}, 1.0};
  if (!shifted) {
    s.components = {{{0.3, 0.3}, 0.2}, {{0.7, 0.7}, 0.2}};
  } else {
    s.components = {{{0.3, 0.7}, 0.15}, {{0.7, 0.3}, 0.25}, {{0.5, 0.5}, 0.1}};
  }
  s.weights.assign(s.components.size(), 1.0 / static_cast<double>(s.components.size()));
  return s;
}

/// Four unit linear functionals and two corner distances, with their negatives.
inline std::vector<ipm::PointFunction> unit_square_family() {
  std::vector<ipm::PointFunction> fam;
  for (int k = 0; k < 4; ++k) {
    const double a = M_PI * k / 4.0;
    fam.push_back(ipm::linear_functional({std::cos(a), std::sin(a)}));
  }
  fam.push_back(ipm::distance_to({0.0, 0.0}));
  fam.push_back(ipm::distance_to({1.0, 1.0}));
  return ipm::symmetrize(std::move(fam));
}

inline std::vector<CheckRow> exp_moment_suite(std::uint64_t seed, std::size_t trials = 100'000) {
  std::vector<CheckRow> rows;
  const auto family = unit_square_family();
  const auto p = unit_square_mixture(false);
  const auto q = unit_square_mixture(true);
  int idx = 0;
  for (bool same : {true, false}) {
    for (std::size_t n : {4u, 16u}) {
      for (double lambda : {0.5, 1.0, 2.0}) {
        const auto r = bounds::exp_moment_check(family, p, same ? p : q, n, lambda, trials,
                                                rng::derive(seed, rng::Tag::kCheck, 500 + idx++));
        rows.push_back({std::string("exp moment ") + (same ? "P=Q" : "P!=Q") + " n=" + std::to_string(n) +
                            " lambda=" + impl::fmt(lambda),
                        r.pass,
                        "estimate=" + impl::fmt(r.estimate) + " se=" + impl::fmt(r.std_error) +
                            " bound=" + impl::fmt(r.bound)});
      }
    }
  }
  return rows;
}

struct BoundsFixture {
  const char* kind;
  double complexity;
  double lambda;
  double delta;
  double n;
  double a;
  double b;
  double expected;
};

inline const std::vector<BoundsFixture>& bounds_fixtures() {
  static const std::vector<BoundsFixture> table = {
#include "fixtures/bounds_fixtures.inc"
  };
  return table;
}

/// Gap functions against fixtures computed offline with 40-digit arithmetic.
inline std::vector<CheckRow> bounds_arith_suite(std::uint64_t /*seed*/) {
  std::vector<CheckRow> rows;
  for (const auto& f : bounds_fixtures()) {
    const std::string kind = f.kind;
    const auto n = static_cast<std::size_t>(f.n);
    double got = 0.0;
    if (kind == "wasserstein") {
      got = bounds::gap_wasserstein(f.complexity, f.lambda, f.delta, n, f.a);
    } else if (kind == "disintegrated") {
      got = bounds::gap_disintegrated(f.complexity, f.lambda, f.delta, n, f.a);
    } else if (kind == "manifold") {
      got = bounds::gap_manifold(f.complexity, f.lambda, f.delta, n, f.a, static_cast<int>(f.b));
    } else {
      got = bounds::gap_tv(f.complexity, f.lambda, f.delta, n);
    }
    const double rel = std::abs(got - f.expected) / std::abs(f.expected);
    std::ostringstream os;
    os.precision(17);
    os << "got=" << got << " expected=" << f.expected << " rel_err=" << rel;
    rows.push_back({"gap_" + kind + " fixture", rel <= 1e-12, os.str()});
  }
  const double lam = bounds::lambda_rule(bounds::NOver1024{}, 10240);
  rows.push_back({"lambda n/1024 at n=10240", lam == 10.0, "lambda=" + impl::fmt(lam)});
  const double opt = bounds::lambda_rule(bounds::Optimal{4.0 - std::log(20.0), 2.0, 0.05}, 100);
  rows.push_back({"optimal lambda fixture", std::abs(opt - 20.0) <= 1e-12, "lambda=" + impl::fmt(opt)});
  return rows;
}

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"lipschitz", "bjorck",       "kl",          "gradients",
                                                 "bounded-diff", "exp-moment", "bounds-arith"};
  return names;
}

/// Throws ConfigError for an unknown suite.
inline std::vector<CheckRow> run_suite(const std::string& name, std::uint64_t seed) {
  if (name == "lipschitz") return lipschitz_suite(seed);
  if (name == "bjorck") return bjorck_suite(seed);
  if (name == "kl") return kl_suite(seed);
  if (name == "gradients") return gradients_suite(seed);
  if (name == "bounded-diff") return bounded_diff_suite(seed);
  if (name == "exp-moment") return exp_moment_suite(seed);
  if (name == "bounds-arith") return bounds_arith_suite(seed);
  throw ConfigError("unknown check suite '" + name + "'");
}

}  // namespace pacgen::checks
